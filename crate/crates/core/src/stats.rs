//! Coincidence bookkeeping, visibilities, the separability statistic and
//! fringe fitting.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::detection::OfOutcome;
use crate::error::{Error, Result};
use crate::sampling::AliceOutcome;

/// Conclusive coincidences (Alice outcome × Bob outcome) plus the tally of
/// inconclusive and untriggered trials for one analysis setting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    pub n_inconclusive: u64,
    pub n_total: u64,
}

impl CoincidenceCounts {
    pub fn new(n_pp: u64, n_pm: u64, n_mp: u64, n_mm: u64) -> Self {
        Self {
            n_pp,
            n_pm,
            n_mp,
            n_mm,
            n_inconclusive: 0,
            n_total: n_pp + n_pm + n_mp + n_mm,
        }
    }

    /// Records one trial; `None` marks a trial whose trigger did not fire.
    pub fn record(&mut self, outcome: Option<(AliceOutcome, OfOutcome)>) {
        self.n_total += 1;
        let Some((alice, bob)) = outcome else {
            return;
        };
        match (alice, bob) {
            (_, OfOutcome::Inconclusive) => self.n_inconclusive += 1,
            (AliceOutcome::Plus, OfOutcome::Plus) => self.n_pp += 1,
            (AliceOutcome::Plus, OfOutcome::Minus) => self.n_pm += 1,
            (AliceOutcome::Perp, OfOutcome::Plus) => self.n_mp += 1,
            (AliceOutcome::Perp, OfOutcome::Minus) => self.n_mm += 1,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.n_pp += other.n_pp;
        self.n_pm += other.n_pm;
        self.n_mp += other.n_mp;
        self.n_mm += other.n_mm;
        self.n_inconclusive += other.n_inconclusive;
        self.n_total += other.n_total;
    }

    pub fn conclusive(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    pub fn triggered(&self) -> u64 {
        self.conclusive() + self.n_inconclusive
    }
}

/// Polarization basis index: 1 = {H, V}, 2 = {R, L}, 3 = {+, −}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisIndex {
    Linear = 1,
    Circular = 2,
    Diagonal = 3,
}

impl BasisIndex {
    pub fn index(self) -> u8 {
        self as u8
    }

    /// Equatorial phase of the "plus" state (`R = (H − iV)/√2` sits at
    /// `3π/2`); `None` for the H/V basis.
    pub fn equatorial_phase(self) -> Option<f64> {
        match self {
            BasisIndex::Linear => None,
            BasisIndex::Circular => Some(1.5 * std::f64::consts::PI),
            BasisIndex::Diagonal => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub basis: BasisIndex,
}

/// `V = |P(++) + P(−−) − P(+−) − P(−+)|` over conclusive events only, with
/// the binomial error `√((1 − E²)/n)`.
pub fn estimate_visibility(
    counts: &CoincidenceCounts,
    basis: BasisIndex,
) -> Result<VisibilityEstimate> {
    let n = counts.conclusive();
    if n == 0 {
        return Err(Error::NoData);
    }
    let n_f = n as f64;
    let e = ((counts.n_pp + counts.n_mm) as f64 - (counts.n_pm + counts.n_mp) as f64) / n_f;
    Ok(VisibilityEstimate {
        value: e.abs(),
        stderr: ((1.0 - e * e).max(0.0) / n_f).sqrt(),
        basis,
    })
}

/// `S = Σ V_i` with errors added in quadrature. Missing bases count as 0.
pub fn s_statistic(v: &[VisibilityEstimate]) -> Result<(f64, f64)> {
    if v.is_empty() || v.len() > 3 {
        return Err(Error::Config(format!(
            "expected 1 to 3 visibility estimates, got {}",
            v.len()
        )));
    }
    for (k, a) in v.iter().enumerate() {
        if v[..k].iter().any(|b| b.basis == a.basis) {
            return Err(Error::DuplicateBasis(a.basis.index()));
        }
    }
    let s = v.iter().map(|x| x.value).sum();
    let err = v.iter().map(|x| x.stderr * x.stderr).sum::<f64>().sqrt();
    Ok((s, err))
}

/// Fraction of triggered trials that passed the filter, with binomial error.
pub fn filtering_probability(counts: &CoincidenceCounts) -> Result<(f64, f64)> {
    let n = counts.triggered();
    if n == 0 {
        return Err(Error::NoData);
    }
    let p = counts.conclusive() as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Least-squares fit of `offset + amplitude·cos(ω·φ − phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Location of the fringe maximum (for `ω = 1`).
    pub phase: f64,
    pub omega: f64,
    pub omega_stderr: f64,
    pub r_squared: f64,
    pub rss: f64,
}

impl FringeFit {
    /// `amplitude / offset`, i.e. `(max − min)/(max + min)` of the fit.
    pub fn visibility(&self) -> f64 {
        self.amplitude / self.offset
    }
}

fn linear_fit(points: &[(f64, f64)], omega: f64) -> Option<(Vector3<f64>, f64)> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for &(phi, y) in points {
        let row = Vector3::new(1.0, (omega * phi).cos(), (omega * phi).sin());
        ata += row * row.transpose();
        aty += row * y;
    }
    let coef = ata.lu().solve(&aty)?;
    let rss = points
        .iter()
        .map(|&(phi, y)| {
            let model = coef[0] + coef[1] * (omega * phi).cos() + coef[2] * (omega * phi).sin();
            (y - model).powi(2)
        })
        .sum();
    Some((coef, rss))
}

fn assemble(
    points: &[(f64, f64)],
    coef: Vector3<f64>,
    rss: f64,
    omega: f64,
    omega_stderr: f64,
) -> FringeFit {
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let tss: f64 = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
    FringeFit {
        offset: coef[0],
        amplitude: coef[1].hypot(coef[2]),
        phase: coef[2].atan2(coef[1]),
        omega,
        omega_stderr,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        rss,
    }
}

/// Fit with the period fixed at 2π.
pub fn fit_fringe(points: &[(f64, f64)]) -> Result<FringeFit> {
    if points.len() < 3 {
        return Err(Error::NoData);
    }
    let (coef, rss) = linear_fit(points, 1.0).ok_or(Error::NoData)?;
    Ok(assemble(points, coef, rss, 1.0, 0.0))
}

/// Fit with a free angular frequency searched over `[0.5, 1.5]`; the
/// frequency error comes from the curvature of the residual sum.
pub fn fit_fringe_free_period(points: &[(f64, f64)]) -> Result<FringeFit> {
    if points.len() < 5 {
        return Err(Error::NoData);
    }
    let rss_at = |w: f64| linear_fit(points, w).map_or(f64::INFINITY, |f| f.1);
    let grid = 201;
    let (mut best, mut best_rss) = (1.0, f64::INFINITY);
    for k in 0..grid {
        let w = 0.5 + k as f64 / (grid - 1) as f64;
        let r = rss_at(w);
        if r < best_rss {
            best = w;
            best_rss = r;
        }
    }
    // golden-section refinement around the best grid point
    let step = 1.0 / (grid - 1) as f64;
    let (mut lo, mut hi) = (best - step, best + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if rss_at(a) < rss_at(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let omega = 0.5 * (lo + hi);
    let (coef, rss) = linear_fit(points, omega).ok_or(Error::NoData)?;
    let h = 1e-4;
    let curvature = (rss_at(omega + h) - 2.0 * rss + rss_at(omega - h)) / (h * h);
    let dof = (points.len() - 4) as f64;
    let sigma2 = rss / dof;
    let omega_stderr = if curvature > 0.0 {
        (2.0 * sigma2 / curvature).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(assemble(points, coef, rss, omega, omega_stderr))
}
