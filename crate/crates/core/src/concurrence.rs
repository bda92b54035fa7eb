//! Two-qubit reconstruction and the Wootters concurrence.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli() -> [Matrix2<Complex64>; 3] {
    let o = c(0.0, 0.0);
    [
        // basis 1 ↔ {H, V}
        Matrix2::new(c(1.0, 0.0), o, o, c(-1.0, 0.0)),
        // basis 2 ↔ {R, L}
        Matrix2::new(o, c(0.0, -1.0), c(0.0, 1.0), o),
        // basis 3 ↔ {+, −}
        Matrix2::new(o, c(1.0, 0.0), c(1.0, 0.0), o),
    ]
}

fn kron(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Matrix4<Complex64> {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

fn hermitian_eigenvalues(m: &Matrix4<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// A validated two-qubit density matrix (Alice ⊗ Bob).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitDensityMatrix(Matrix4<Complex64>);

impl TwoQubitDensityMatrix {
    pub fn new(rho: Matrix4<Complex64>) -> Result<Self> {
        if (rho - rho.adjoint()).camax() > HERMITIAN_TOL {
            return Err(Error::Config("density matrix is not Hermitian".into()));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::Config(format!("density matrix trace {trace} != 1")));
        }
        let ev = hermitian_eigenvalues(&rho);
        if ev.iter().any(|&e| e < -PSD_TOL) {
            return Err(Error::NonPhysical(ev));
        }
        Ok(Self(rho))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }

    /// `p·|Ψ⁻⟩⟨Ψ⁻| + (1 − p)·I/4`.
    pub fn werner(p: f64) -> Result<Self> {
        let s = 0.5f64.sqrt();
        let psi = [c(0.0, 0.0), c(s, 0.0), c(-s, 0.0), c(0.0, 0.0)];
        let rho = Matrix4::from_fn(|r, col| {
            let diag = if r == col { (1.0 - p) / 4.0 } else { 0.0 };
            psi[r] * psi[col].conj() * p + diag
        });
        Self::new(rho)
    }

    /// `|a⟩⟨a| ⊗ |b⟩⟨b|` for two normalized qubit states.
    pub fn product(a: [Complex64; 2], b: [Complex64; 2]) -> Result<Self> {
        let v: Vec<Complex64> = (0..4).map(|k| a[k / 2] * b[k % 2]).collect();
        Self::new(Matrix4::from_fn(|r, col| v[r] * v[col].conj()))
    }
}

/// `ρ = ¼(I⊗I − Σ_i v_i σ_i⊗σ_i)`: the Bell-diagonal state whose
/// same-basis correlations are `⟨σ_i⊗σ_i⟩ = −v_i`.
pub fn bell_diagonal_state(v1: f64, v2: f64, v3: f64) -> Result<TwoQubitDensityMatrix> {
    for (name, v) in [("v1", v1), ("v2", v2), ("v3", v3)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "visibility must lie in [0, 1]",
            });
        }
    }
    let mut rho = Matrix4::identity();
    for (s, v) in pauli().iter().zip([v1, v2, v3]) {
        rho -= kron(s, s) * c(v, 0.0);
    }
    TwoQubitDensityMatrix::new(rho * c(0.25, 0.0))
}

/// `C = max(0, λ₁ − λ₂ − λ₃ − λ₄)` with `λ` the decreasing square roots of
/// the eigenvalues of `ρ (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`.
///
/// Those square roots are the singular values of `Ψᵀ (σ_y⊗σ_y) Ψ` for any
/// decomposition `ρ = ΨΨ†`, which avoids taking square roots of
/// eigenvalues that are zero up to rounding.
pub fn wootters_concurrence(rho: &TwoQubitDensityMatrix) -> f64 {
    let sy = pauli()[1];
    let yy = kron(&sy, &sy);
    let eig = rho.matrix().symmetric_eigen();
    let sqrt_diag = Matrix4::from_diagonal(&eig.eigenvalues.map(|e| c(e.max(0.0).sqrt(), 0.0)));
    let psi = eig.eigenvectors * sqrt_diag;
    let tau = psi.transpose() * yy * psi;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singlet_has_unit_concurrence() {
        let rho = bell_diagonal_state(1.0, 1.0, 1.0).unwrap();
        let singlet = TwoQubitDensityMatrix::werner(1.0).unwrap();
        assert!((rho.matrix() - singlet.matrix()).camax() < 1e-15);
        assert!((wootters_concurrence(&rho) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maximally_mixed_and_product_states() {
        let rho = bell_diagonal_state(0.0, 0.0, 0.0).unwrap();
        assert!((rho.matrix() - Matrix4::identity() * c(0.25, 0.0)).camax() < 1e-15);
        assert!(wootters_concurrence(&rho) < 1e-9);
        let s = 0.5f64.sqrt();
        let prod =
            TwoQubitDensityMatrix::product([c(0.6, 0.0), c(0.0, 0.8)], [c(s, 0.0), c(0.0, -s)])
                .unwrap();
        assert!(wootters_concurrence(&prod) < 1e-9);
    }

    #[test]
    fn werner_closed_form() {
        for p in [0.0, 0.2, 1.0 / 3.0, 0.4, 0.8, 1.0] {
            let want = f64::max(0.0, (3.0 * p - 1.0) / 2.0);
            let got = wootters_concurrence(&TwoQubitDensityMatrix::werner(p).unwrap());
            assert!((got - want).abs() < 1e-9, "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn bell_diagonal_matches_sum_rule() {
        // singlet-dominated Bell-diagonal states: C = (V₁ + V₂ + V₃ − 1)/2
        let rho = bell_diagonal_state(0.09, 0.540, 0.55).unwrap();
        let conc = wootters_concurrence(&rho);
        assert!((conc - 0.09).abs() < 1e-9, "{conc}");
        let rho = bell_diagonal_state(0.3, 0.5, 0.6).unwrap();
        assert!((wootters_concurrence(&rho) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn two_visibilities_above_one_need_a_third() {
        // V₂ + V₃ > 1 + V₁ puts weight −(V₂ + V₃ − 1 − V₁)/4 on a Bell state
        match bell_diagonal_state(0.0, 0.540, 0.55) {
            Err(Error::NonPhysical(ev)) => {
                assert!(ev.iter().any(|&e| (e + 0.0225).abs() < 1e-12), "{ev:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_physical_visibilities_are_rejected() {
        // (1, 1, 0): eigenvalue ¼(1 − 1 − 1 + 0) < 0
        match bell_diagonal_state(1.0, 1.0, 0.0) {
            Err(Error::NonPhysical(ev)) => assert!(ev.iter().any(|&e| e < -0.2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(bell_diagonal_state(1.2, 0.0, 0.0).is_err());
    }
}
