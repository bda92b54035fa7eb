//! Truncated two-mode Fock representation, used as an exact oracle at
//! small gain.
//!
//! Amplitudes are stored per total-photon-number sector: sector `n` holds
//! the `n + 1` amplitudes of `|p, n − p⟩`. Passive polarization optics
//! never mixes sectors, so a total-number cutoff is exact under basis
//! rotations.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gain::GainParams;
use crate::logspace::ln_factorial;
use crate::macrostate::{
    gamma_coefficient, total_pairs_tail, EquatorialBasis, FockOccupation, MacroLabel,
};

/// Default bound on probability mass allowed beyond the cutoff.
pub const DEFAULT_MAX_TAIL: f64 = 1e-6;
/// Largest total photon number the dense oracle will allocate.
pub const MAX_DENSE_CUTOFF: usize = 1000;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fock basis a dense state is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Basis {
    /// `{π_H, π_V}`, the reference basis.
    Linear,
    Equatorial(EquatorialBasis),
}

impl Basis {
    fn same_as(&self, other: &Basis) -> bool {
        match (self, other) {
            (Basis::Linear, Basis::Linear) => true,
            (Basis::Equatorial(a), Basis::Equatorial(b)) => (a.phi() - b.phi()).abs() < 1e-12,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTwoModeState {
    cutoff: usize,
    basis: Basis,
    sectors: Vec<Vec<Complex64>>,
    tail_bound: f64,
}

impl DenseTwoModeState {
    pub fn zeros(cutoff: usize, basis: Basis) -> Self {
        Self {
            cutoff,
            basis,
            sectors: (0..=cutoff).map(|n| vec![ZERO; n + 1]).collect(),
            tail_bound: 0.0,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Probability mass lying beyond the cutoff.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn amplitude(&self, occ: FockOccupation) -> Complex64 {
        let n = occ.total() as usize;
        if n > self.cutoff {
            return ZERO;
        }
        self.sectors[n][occ.p as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.sectors.iter().flatten().map(|a| a.norm_sqr()).sum()
    }

    pub fn sector(&self, n: usize) -> &[Complex64] {
        &self.sectors[n]
    }

    /// Multiplies every amplitude by `factor` (tail scales with `|factor|²`).
    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.sectors.iter_mut().flatten().for_each(|a| *a *= factor);
        out.tail_bound *= factor.norm_sqr();
        out
    }

    /// `self + other`, both in the same basis and cutoff. The tail of the
    /// sum is bounded by `(√t₁ + √t₂)²`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out
            .sectors
            .iter_mut()
            .flatten()
            .zip(other.sectors.iter().flatten())
        {
            *a += *b;
        }
        out.tail_bound = (self.tail_bound.sqrt() + other.tail_bound.sqrt()).powi(2);
        Ok(out)
    }

    /// Renormalizes the in-window amplitudes, dropping the tail.
    pub fn normalized_window(&self) -> Self {
        let norm = self.norm_sqr().sqrt();
        let mut out = self.scaled(Complex64::new(1.0 / norm, 0.0));
        out.tail_bound = 0.0;
        out
    }

    /// Re-expresses the state in another Fock basis.
    pub fn express_in(&self, target: Basis) -> Self {
        if self.basis.same_as(&target) {
            return self.clone();
        }
        let linear = match self.basis {
            Basis::Linear => self.clone(),
            Basis::Equatorial(b) => rotate_polarization_basis(self, b.phi()),
        };
        match target {
            Basis::Linear => linear,
            Basis::Equatorial(b) => inverse_rotate_polarization_basis(&linear, b.phi()),
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.cutoff != other.cutoff {
            return Err(Error::Mismatch("different cutoffs"));
        }
        if !self.basis.same_as(&other.basis) {
            return Err(Error::Mismatch("different bases"));
        }
        Ok(())
    }
}

/// Amplitudes of `|Φ^χ⟩` in its own basis `χ`, truncated at `cutoff`.
///
/// The printed expansion is used with one extra phase `e^{−iχ(i+j)}`.
/// That phase comes from the amplifier coupling `a_H†a_V†`, which reads
/// `e^{−iχ}(a_χ†² − a_χ⊥†²)/2` in the `χ` basis; without it the family
/// `Φ^χ` is not the linear image of `|1χ⟩`. Probabilities are unchanged.
fn macro_state_own_basis(
    chi: EquatorialBasis,
    gain: &GainParams,
    cutoff: usize,
) -> DenseTwoModeState {
    let mut state = DenseTwoModeState::zeros(cutoff, Basis::Equatorial(chi));
    if cutoff == 0 {
        return state;
    }
    let max_pairs = ((cutoff - 1) / 2) as u64;
    for i in 0..=max_pairs {
        for j in 0..=(max_pairs - i) {
            let gamma = gamma_coefficient(i, j, gain);
            if gamma.is_zero() {
                continue;
            }
            let ln_abs = gamma.ln_abs + 0.5 * (ln_factorial(2 * i + 1) + ln_factorial(2 * j))
                - ln_factorial(i)
                - ln_factorial(j);
            let phase = Complex64::from_polar(1.0, -chi.phi() * (i + j) as f64);
            let n = (2 * i + 1 + 2 * j) as usize;
            state.sectors[n][(2 * i + 1) as usize] = phase * (gamma.sign() * ln_abs.exp());
        }
    }
    state
}

/// Dense Fock amplitudes of `Σ_k w_k |Φ^{label_k}⟩` in the H/V basis, with
/// the default tail allowance.
pub fn build_dense_state(
    coeffs: &[(Complex64, MacroLabel)],
    gain: &GainParams,
    cutoff: usize,
) -> Result<DenseTwoModeState> {
    build_dense_state_with_max_tail(coeffs, gain, cutoff, DEFAULT_MAX_TAIL)
}

/// As [`build_dense_state`], rejecting the cutoff when the certified mass
/// beyond it exceeds `max_tail`.
pub fn build_dense_state_with_max_tail(
    coeffs: &[(Complex64, MacroLabel)],
    gain: &GainParams,
    cutoff: usize,
    max_tail: f64,
) -> Result<DenseTwoModeState> {
    let weight_norm: f64 = coeffs.iter().map(|(w, _)| w.norm_sqr()).sum();
    if coeffs.is_empty() || (weight_norm - 1.0).abs() > 1e-12 {
        return Err(Error::UnnormalizedWeights(weight_norm));
    }
    if cutoff > MAX_DENSE_CUTOFF {
        return Err(Error::CutoffTooLarge {
            cutoff,
            limit: MAX_DENSE_CUTOFF,
        });
    }
    let l1: f64 = coeffs.iter().map(|(w, _)| w.norm()).sum();
    let certified = |cut: usize| -> f64 {
        let single = if cut == 0 {
            1.0
        } else {
            total_pairs_tail(gain, ((cut - 1) / 2) as u64)
        };
        (l1 * l1 * single).min(1.0)
    };
    let bound = certified(cutoff);
    if bound > max_tail {
        let mut required = cutoff.max(1);
        while certified(required) > max_tail && required < 1_000_000 {
            required += 1;
        }
        return Err(Error::CutoffTooSmall {
            cutoff,
            tail: bound,
            max_tail,
            required,
        });
    }

    let mut out = DenseTwoModeState::zeros(cutoff, Basis::Linear);
    for (w, label) in coeffs {
        let own = macro_state_own_basis(label.injected(), gain, cutoff);
        let linear = rotate_polarization_basis(&own, label.injected().phi());
        for (a, b) in out
            .sectors
            .iter_mut()
            .flatten()
            .zip(linear.sectors.iter().flatten())
        {
            *a += w * b;
        }
    }
    // ⟨Φ^χ|Φ^ξ⟩ = ⟨1χ|1ξ⟩ = (1 + e^{i(ξ−χ)})/2 for the untruncated states
    let mut full_norm = 0.0;
    for (wk, lk) in coeffs {
        for (wl, ll) in coeffs {
            let dphi = ll.injected().phi() - lk.injected().phi();
            let inner = (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, dphi)) * 0.5;
            full_norm += (wk.conj() * wl * inner).re;
        }
    }
    out.tail_bound = (full_norm - out.norm_sqr()).max(0.0).min(bound);
    Ok(out)
}

/// Generates the per-sector matrices `M[h][p] = ⟨h, n−h|_{HV} |p, n−p⟩_φ`
/// by repeated application of the creation operators
/// `a_φ† = (a_H† + e^{iφ} a_V†)/√2` and `a_φ⊥† = (a_H† − e^{iφ} a_V†)/√2`.
struct SectorRotation {
    phase: Complex64,
    n: usize,
    matrix: Vec<Complex64>,
}

impl SectorRotation {
    fn new(phi: f64) -> Self {
        Self {
            phase: Complex64::from_polar(1.0, phi),
            n: 0,
            matrix: vec![Complex64::new(1.0, 0.0)],
        }
    }

    fn advance(&mut self) {
        let prev_n = self.n;
        let n = prev_n + 1;
        let dim = n + 1;
        let prev = std::mem::take(&mut self.matrix);
        let mut next = vec![ZERO; dim * dim];
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let create =
            |col: usize, sign: f64, divisor: f64, next: &mut Vec<Complex64>, out_col: usize| {
                let scale = inv_sqrt2 / divisor.sqrt();
                for h in 0..=prev_n {
                    let x = prev[h * (prev_n + 1) + col];
                    if x == ZERO {
                        continue;
                    }
                    let v = (prev_n - h) as f64;
                    next[(h + 1) * dim + out_col] += x * (((h + 1) as f64).sqrt() * scale);
                    next[h * dim + out_col] += x * self.phase * (sign * (v + 1.0).sqrt() * scale);
                }
            };
        for p in 1..=n {
            create(p - 1, 1.0, p as f64, &mut next, p);
        }
        create(0, -1.0, n as f64, &mut next, 0);
        self.matrix = next;
        self.n = n;
    }

    fn apply(&self, input: &[Complex64], output: &mut [Complex64]) {
        let dim = self.n + 1;
        for (h, out) in output.iter_mut().enumerate() {
            let row = &self.matrix[h * dim..(h + 1) * dim];
            *out = row.iter().zip(input).map(|(m, x)| m * x).sum();
        }
    }

    fn apply_adjoint(&self, input: &[Complex64], output: &mut [Complex64]) {
        let dim = self.n + 1;
        for (p, out) in output.iter_mut().enumerate() {
            *out = (0..dim)
                .map(|h| self.matrix[h * dim + p].conj() * input[h])
                .sum();
        }
    }
}

fn transform(
    state: &DenseTwoModeState,
    phi: f64,
    adjoint: bool,
    basis: Basis,
) -> DenseTwoModeState {
    let mut out = DenseTwoModeState::zeros(state.cutoff, basis);
    out.tail_bound = state.tail_bound;
    let mut rot = SectorRotation::new(phi);
    for n in 0..=state.cutoff {
        if n > 0 {
            rot.advance();
        }
        if adjoint {
            rot.apply_adjoint(&state.sectors[n], &mut out.sectors[n]);
        } else {
            rot.apply(&state.sectors[n], &mut out.sectors[n]);
        }
    }
    out
}

/// Applies the passive two-mode transformation taking the equatorial mode
/// pair of `phase` to `{π_H, π_V}`: amplitudes are read in the `phase`
/// basis and returned in the H/V basis.
pub fn rotate_polarization_basis(state: &DenseTwoModeState, phase: f64) -> DenseTwoModeState {
    transform(state, phase, false, Basis::Linear)
}

/// Inverse of [`rotate_polarization_basis`]: H/V amplitudes to the
/// equatorial basis of `phase`.
pub fn inverse_rotate_polarization_basis(
    state: &DenseTwoModeState,
    phase: f64,
) -> DenseTwoModeState {
    transform(
        state,
        phase,
        true,
        Basis::Equatorial(EquatorialBasis::new(phase)),
    )
}

/// Hermitian inner product `⟨a|b⟩`.
pub fn overlap(a: &DenseTwoModeState, b: &DenseTwoModeState) -> Result<Complex64> {
    a.check_compatible(b)?;
    Ok(a.sectors
        .iter()
        .flatten()
        .zip(b.sectors.iter().flatten())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Joint photon-number distribution `P(p, q)` of a dense state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    cutoff: usize,
    basis: Basis,
    sectors: Vec<Vec<f64>>,
}

impl JointDistribution {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn prob(&self, occ: FockOccupation) -> f64 {
        let n = occ.total() as usize;
        if n > self.cutoff {
            0.0
        } else {
            self.sectors[n][occ.p as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.sectors.iter().flatten().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FockOccupation, f64)> + '_ {
        self.sectors.iter().enumerate().flat_map(|(n, s)| {
            s.iter()
                .enumerate()
                .map(move |(p, &v)| (FockOccupation::new(p as u64, (n - p) as u64), v))
        })
    }

    /// Distribution of the total photon number.
    pub fn total_number(&self) -> Vec<f64> {
        self.sectors.iter().map(|s| s.iter().sum()).collect()
    }

    /// `Σ w_k P_k`, for mixing distributions on the same window.
    pub fn mix(parts: &[(f64, &JointDistribution)]) -> Result<JointDistribution> {
        let first = parts.first().ok_or(Error::NoData)?.1;
        let mut out = JointDistribution {
            cutoff: first.cutoff,
            basis: first.basis,
            sectors: first.sectors.iter().map(|s| vec![0.0; s.len()]).collect(),
        };
        for (w, d) in parts {
            if d.cutoff != first.cutoff || !d.basis.same_as(&first.basis) {
                return Err(Error::Mismatch("distributions on different windows"));
            }
            for (a, b) in out
                .sectors
                .iter_mut()
                .flatten()
                .zip(d.sectors.iter().flatten())
            {
                *a += w * b;
            }
        }
        Ok(out)
    }
}

/// `|amplitude|²` over the window, in the state's current basis.
pub fn photon_statistics(state: &DenseTwoModeState) -> JointDistribution {
    JointDistribution {
        cutoff: state.cutoff,
        basis: state.basis,
        sectors: state
            .sectors
            .iter()
            .map(|s| s.iter().map(|a| a.norm_sqr()).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macrostate::occupation_probability;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn gain(g: f64) -> GainParams {
        GainParams::new(g).unwrap()
    }

    fn one(label: MacroLabel) -> Vec<(Complex64, MacroLabel)> {
        vec![(Complex64::new(1.0, 0.0), label)]
    }

    fn lenient(coeffs: &[(Complex64, MacroLabel)], g: f64, cutoff: usize) -> DenseTwoModeState {
        build_dense_state_with_max_tail(coeffs, &gain(g), cutoff, 1e-3).unwrap()
    }

    fn max_diff(a: &DenseTwoModeState, b: &DenseTwoModeState) -> f64 {
        a.sectors
            .iter()
            .flatten()
            .zip(b.sectors.iter().flatten())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_gain_is_single_photon() {
        let s = build_dense_state(&one(MacroLabel::plus(0.0)), &gain(0.0), 4).unwrap();
        let own = s.express_in(Basis::Equatorial(EquatorialBasis::new(0.0)));
        let stats = photon_statistics(&own);
        assert!((stats.prob(FockOccupation::new(1, 0)) - 1.0).abs() < 1e-15);
        assert!((stats.total() - 1.0).abs() < 1e-15);
        // |+⟩ = (|H⟩ + |V⟩)/√2 in the H/V basis
        assert!((s.amplitude(FockOccupation::new(1, 0)).re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.amplitude(FockOccupation::new(0, 1)).re - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn superposition_has_single_quantum_support() {
        let h = FRAC_1_SQRT_2;
        for (sign, delta) in [(1.0, 1i64), (-1.0, -1i64)] {
            let coeffs = vec![
                (Complex64::new(h, 0.0), MacroLabel::plus(0.0)),
                (Complex64::new(sign * h, 0.0), MacroLabel::perp(0.0)),
            ];
            let s = lenient(&coeffs, 1.0, 40);
            let stats = photon_statistics(&s);
            let off: f64 = stats
                .iter()
                .filter(|(o, _)| o.p as i64 - o.q as i64 != delta)
                .map(|(_, v)| v)
                .sum();
            assert!(off < 1e-12, "off-support mass {off}");
            assert!((stats.total() + s.tail_bound() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cutoff_rejection_reports_requirement() {
        let err = build_dense_state(&one(MacroLabel::plus(0.0)), &gain(1.0), 40).unwrap_err();
        match err {
            Error::CutoffTooSmall { required, .. } => {
                assert!(required > 40);
                assert!(
                    build_dense_state(&one(MacroLabel::plus(0.0)), &gain(1.0), required).is_ok()
                );
                assert!(
                    build_dense_state(&one(MacroLabel::plus(0.0)), &gain(1.0), required - 2)
                        .is_err()
                );
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            build_dense_state(&one(MacroLabel::plus(0.0)), &gain(0.1), 5000),
            Err(Error::CutoffTooLarge { .. })
        ));
        let bad = vec![(Complex64::new(0.5, 0.0), MacroLabel::plus(0.0))];
        assert!(matches!(
            build_dense_state(&bad, &gain(0.1), 10),
            Err(Error::UnnormalizedWeights(_))
        ));
    }

    #[test]
    fn macro_states_are_orthonormal() {
        let plus = lenient(&one(MacroLabel::plus(0.0)), 1.0, 40);
        let minus = lenient(&one(MacroLabel::perp(0.0)), 1.0, 40);
        let pp = overlap(&plus, &plus).unwrap();
        assert!((pp.re + plus.tail_bound() - 1.0).abs() < 1e-9);
        assert!(pp.im.abs() < 1e-15);
        assert!(overlap(&plus, &minus).unwrap().norm() < 1e-12);
        // tail is the closed form for a single state
        assert!((plus.tail_bound() - total_pairs_tail(&gain(1.0), 19)).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_hermitian_and_checks_windows() {
        let a = lenient(&one(MacroLabel::plus(0.4)), 0.7, 30);
        let b = lenient(&one(MacroLabel::plus(1.9)), 0.7, 30);
        let ab = overlap(&a, &b).unwrap();
        let ba = overlap(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-14);
        // ⟨Φ^χ|Φ^ξ⟩ → ⟨1χ|1ξ⟩ as the cutoff grows
        let want = (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, 1.5)) * 0.5;
        assert!((ab - want).norm() < 1e-3);
        let c = lenient(&one(MacroLabel::plus(0.4)), 0.7, 31);
        assert!(overlap(&a, &c).is_err());
        let d = a.express_in(Basis::Equatorial(EquatorialBasis::new(0.4)));
        assert!(overlap(&a, &d).is_err());
    }

    #[test]
    fn rotation_round_trip_and_unitarity() {
        let coeffs = vec![
            (Complex64::new(0.6, 0.0), MacroLabel::plus(0.3)),
            (Complex64::new(0.0, 0.8), MacroLabel::perp(0.3)),
        ];
        let s = lenient(&coeffs, 0.8, 30);
        let there = inverse_rotate_polarization_basis(&s, 0.0);
        let back = rotate_polarization_basis(&there, 0.0);
        assert!(max_diff(&s, &back) < 1e-12);
        assert!((there.norm_sqr() - s.norm_sqr()).abs() < 1e-12);
        let before = photon_statistics(&s).total_number();
        let after = photon_statistics(&there).total_number();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_invariant_under_common_rotation() {
        let a = lenient(&one(MacroLabel::plus(0.4)), 0.6, 25);
        let b = lenient(&one(MacroLabel::perp(2.2)), 0.6, 25);
        let before = overlap(&a, &b).unwrap();
        let phi = 1.234;
        let ra = inverse_rotate_polarization_basis(&a, phi);
        let rb = inverse_rotate_polarization_basis(&b, phi);
        assert!((overlap(&ra, &rb).unwrap() - before).norm() < 1e-12);
    }

    #[test]
    fn grid_matches_occupation_probability() {
        let g = gain(1.0);
        for label in [MacroLabel::plus(0.0), MacroLabel::perp(0.9)] {
            let s = lenient(&one(label), 1.0, 40);
            let own = s.express_in(Basis::Equatorial(label.basis()));
            let stats = photon_statistics(&own);
            for (occ, p) in stats.iter() {
                let want = occupation_probability(label, occ, &g);
                assert!((p - want).abs() < 1e-10, "{occ:?}: {p} vs {want}");
            }
        }
    }

    #[test]
    fn phase_covariance_of_own_basis_statistics() {
        let reference = photon_statistics(
            &lenient(&one(MacroLabel::plus(0.0)), 0.9, 30)
                .express_in(Basis::Equatorial(EquatorialBasis::new(0.0))),
        );
        for phi in [0.5, PI / 2.0, 2.0, PI, 4.5] {
            let label = MacroLabel::plus(phi);
            let stats = photon_statistics(
                &lenient(&one(label), 0.9, 30).express_in(Basis::Equatorial(label.basis())),
            );
            for (occ, p) in stats.iter() {
                assert!((p - reference.prob(occ)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity_of_amplification() {
        // Φ^φ = (Φ^H + e^{iφ} Φ^V)/√2 with Φ^{H,V} = (Φ^0 ± Φ^π)/√2
        let phi = 1.1;
        let direct = lenient(&one(MacroLabel::plus(phi)), 0.7, 30);
        let e = Complex64::from_polar(1.0, phi);
        let via = lenient(
            &[
                ((1.0 + e) * 0.5, MacroLabel::plus(0.0)),
                ((1.0 - e) * 0.5, MacroLabel::plus(PI)),
            ],
            0.7,
            30,
        );
        assert!(max_diff(&direct, &via) < 1e-12);
    }
}
