//! Exact algebra of the amplified Macro-states.
//!
//! Injecting one photon of equatorial polarization `φ` into the
//! phase-covariant amplifier yields, in the `{π_φ, π_φ⊥}` Fock basis,
//!
//! ```text
//! |Φ^φ⟩  = Σ_ij γ_ij √((2i+1)!(2j)!)/(i! j!) |2i+1, 2j⟩
//! |Φ^φ⊥⟩ = the same with the two modes exchanged
//! γ_ij   = C⁻² (−Γ/2)^i (Γ/2)^j,   C = cosh g,  Γ = tanh g
//! ```
//!
//! The squared amplitude factorizes as `f(i)·h(j)` with
//!
//! ```text
//! f(i) = C⁻³ (2i+1) Γ^{2i} C(2i,i)/4^i     (odd mode, pair index i)
//! h(j) = C⁻¹        Γ^{2j} C(2j,j)/4^j     (even mode, pair index j)
//! ```
//!
//! Both series have term ratios decreasing monotonically towards `Γ²`,
//! which gives the certified geometric tail bounds used throughout.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainParams;
use crate::logspace::{ln_central_binomial_scaled, KahanSum, SignedLog};

/// Default cap on the number of series terms before giving up.
pub const DEFAULT_TERM_BUDGET: usize = 20_000_000;

/// Equatorial polarization `2^{-1/2}(|H⟩ + e^{iφ}|V⟩)`; `φ` kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquatorialBasis {
    phi: f64,
}

impl EquatorialBasis {
    /// # Panics
    /// If `phi` is not finite.
    pub fn new(phi: f64) -> Self {
        assert!(
            phi.is_finite(),
            "equatorial phase must be finite, got {phi}"
        );
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Self { phi }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// The orthogonal polarization, which is itself equatorial at `φ + π`.
    pub fn perp(&self) -> Self {
        Self::new(self.phi + PI)
    }
}

/// Which member of the orthogonal pair `{|Φ^φ⟩, |Φ^φ⊥⟩}` is meant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MacroLabel {
    PhiPlus(EquatorialBasis),
    PhiPerp(EquatorialBasis),
}

impl MacroLabel {
    pub fn plus(phi: f64) -> Self {
        MacroLabel::PhiPlus(EquatorialBasis::new(phi))
    }

    pub fn perp(phi: f64) -> Self {
        MacroLabel::PhiPerp(EquatorialBasis::new(phi))
    }

    /// The basis in which occupations of this label are expressed.
    pub fn basis(&self) -> EquatorialBasis {
        match *self {
            MacroLabel::PhiPlus(b) | MacroLabel::PhiPerp(b) => b,
        }
    }

    pub fn is_parallel(&self) -> bool {
        matches!(self, MacroLabel::PhiPlus(_))
    }

    /// Phase of the injected photon: `PhiPerp(φ) ≡ PhiPlus(φ + π)`.
    pub fn injected(&self) -> EquatorialBasis {
        match *self {
            MacroLabel::PhiPlus(b) => b,
            MacroLabel::PhiPerp(b) => b.perp(),
        }
    }
}

/// Photon counts `(p, q)` on the modes `(π_φ, π_φ⊥)` of some basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockOccupation {
    pub p: u64,
    pub q: u64,
}

impl FockOccupation {
    pub fn new(p: u64, q: u64) -> Self {
        Self { p, q }
    }

    pub fn swapped(self) -> Self {
        Self {
            p: self.q,
            q: self.p,
        }
    }

    pub fn total(&self) -> u64 {
        self.p + self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// `π_φ` of the label's basis.
    Parallel,
    /// `π_φ⊥` of the label's basis.
    Perpendicular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    Analytic,
    Numeric,
}

fn power_term(k: u64, ln_base: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_base
    }
}

/// `γ_ij` in sign/log-magnitude form.
pub fn gamma_coefficient(i: u64, j: u64, gain: &GainParams) -> SignedLog {
    let ln_half_tanh = gain.ln_tanh() - std::f64::consts::LN_2;
    SignedLog {
        negative: i % 2 == 1,
        ln_abs: -2.0 * gain.ln_cosh() + power_term(i + j, ln_half_tanh),
    }
}

/// Which factor of the squared amplitude a pair index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSeries {
    /// `f(i)`: the mode carrying `2i + 1` photons.
    Odd,
    /// `h(j)`: the mode carrying `2j` photons.
    Even,
}

impl PairSeries {
    /// `ln f(k)` or `ln h(k)`.
    pub fn ln_weight(self, k: u64, gain: &GainParams) -> f64 {
        let common = power_term(k, 2.0 * gain.ln_tanh()) + ln_central_binomial_scaled(k);
        match self {
            PairSeries::Odd => common + ((2 * k + 1) as f64).ln() - 3.0 * gain.ln_cosh(),
            PairSeries::Even => common - gain.ln_cosh(),
        }
    }

    pub fn weight(self, k: u64, gain: &GainParams) -> f64 {
        self.ln_weight(k, gain).exp()
    }

    /// `1 − w(k+1)/w(k)`, computed without cancellation.
    ///
    /// Odd: ratio `Γ²(2k+3)/(2k+2)`; even: `Γ²(2k+1)/(2k+2)`. Both are
    /// non-increasing in `k`.
    pub fn one_minus_ratio(self, k: u64, gain: &GainParams) -> f64 {
        let y = gain.tanh_sq();
        let d = y / (2 * k + 2) as f64;
        match self {
            PairSeries::Odd => gain.one_minus_tanh_sq() - d,
            PairSeries::Even => gain.one_minus_tanh_sq() + d,
        }
    }

    /// Photons carried by pair index `k`.
    pub fn photons(self, k: u64) -> u64 {
        match self {
            PairSeries::Odd => 2 * k + 1,
            PairSeries::Even => 2 * k,
        }
    }
}

/// Result of a certified series summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub sum: f64,
    /// Certified upper bound on the omitted remainder.
    pub tail_bound: f64,
    /// Number of leading terms included (indices `0..terms`).
    pub terms: usize,
}

/// Sums `Σ_k w(k)` over one pair series until the remainder is certified
/// below `tail_epsilon`.
pub fn sum_pair_series(
    series: PairSeries,
    gain: &GainParams,
    tail_epsilon: f64,
    budget: usize,
) -> Result<SeriesSum> {
    sum_certified(
        |k| series.ln_weight(k, gain),
        |k| series.one_minus_ratio(k, gain),
        0,
        tail_epsilon,
        budget,
    )
}

/// Sums a positive series whose term ratios are non-increasing from index
/// `start` on. `one_minus_ratio(k)` is `1 − t(k+1)/t(k)`. The remainder
/// after term `k` is bounded by `t(k+1) / (1 − t(k+2)/t(k+1))` once that
/// ratio drops below one.
pub(crate) fn sum_certified(
    ln_term: impl Fn(u64) -> f64,
    one_minus_ratio: impl Fn(u64) -> f64,
    start: u64,
    tail_epsilon: f64,
    budget: usize,
) -> Result<SeriesSum> {
    let mut acc = KahanSum::default();
    let mut next = ln_term(start).exp();
    let mut tail = f64::INFINITY;
    for (n, k) in (1..=budget).zip(start..) {
        acc.add(next);
        next = ln_term(k + 1).exp();
        let gap = one_minus_ratio(k + 1);
        tail = if next == 0.0 {
            0.0
        } else if gap > 0.0 {
            next / gap
        } else {
            f64::INFINITY
        };
        if tail < tail_epsilon {
            return Ok(SeriesSum {
                sum: acc.total(),
                tail_bound: tail,
                terms: n,
            });
        }
    }
    Err(Error::NonConvergence { budget, tail })
}

/// `|⟨p, q|Φ^label⟩|²`, with `(p, q)` in the label's own basis.
pub fn occupation_probability(label: MacroLabel, occ: FockOccupation, gain: &GainParams) -> f64 {
    ln_occupation_probability(label, occ, gain).exp()
}

/// Natural log of [`occupation_probability`]; `-inf` off the parity support.
pub fn ln_occupation_probability(label: MacroLabel, occ: FockOccupation, gain: &GainParams) -> f64 {
    let (odd, even) = if label.is_parallel() {
        (occ.p, occ.q)
    } else {
        (occ.q, occ.p)
    };
    if odd % 2 == 0 || even % 2 == 1 {
        return f64::NEG_INFINITY;
    }
    PairSeries::Odd.ln_weight(odd / 2, gain) + PairSeries::Even.ln_weight(even / 2, gain)
}

/// `|1 − Σ P(p, q)|` over an adaptively chosen support whose omitted mass
/// is certified below `tail_epsilon`.
///
/// The double sum is evaluated as the product of the two factor series,
/// which is what makes gain 6 (≈ 10⁶ terms per factor) tractable.
pub fn normalization_defect(
    label: MacroLabel,
    gain: &GainParams,
    tail_epsilon: f64,
) -> Result<f64> {
    normalization_defect_with_budget(label, gain, tail_epsilon, DEFAULT_TERM_BUDGET)
}

pub fn normalization_defect_with_budget(
    _label: MacroLabel,
    gain: &GainParams,
    tail_epsilon: f64,
    budget: usize,
) -> Result<f64> {
    check_epsilon(tail_epsilon)?;
    let odd = sum_pair_series(PairSeries::Odd, gain, 0.5 * tail_epsilon, budget)?;
    let even = sum_pair_series(PairSeries::Even, gain, 0.5 * tail_epsilon, budget)?;
    Ok((1.0 - odd.sum * even.sum).abs())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "tail_epsilon",
            value: eps,
            reason: "must be positive and finite",
        })
    }
}

/// Mean photon number of `label` in one mode of its own basis.
///
/// The label's own mode carries `3·m̄ + 1` photons on average, the other
/// `m̄`. The numeric method sums `m·P(m, n)` to a relative precision of
/// `1e-12`.
pub fn mean_photon_number(
    label: MacroLabel,
    mode: Mode,
    gain: &GainParams,
    method: MomentMethod,
) -> Result<f64> {
    let own_mode = matches!(
        (label.is_parallel(), mode),
        (true, Mode::Parallel) | (false, Mode::Perpendicular)
    );
    match method {
        MomentMethod::Analytic => Ok(if own_mode {
            3.0 * gain.mbar() + 1.0
        } else {
            gain.mbar()
        }),
        MomentMethod::Numeric => {
            let series = if own_mode {
                PairSeries::Odd
            } else {
                PairSeries::Even
            };
            numeric_mode_mean(series, gain, 1e-12)
        }
    }
}

fn numeric_mode_mean(series: PairSeries, gain: &GainParams, rel_eps: f64) -> Result<f64> {
    let budget = DEFAULT_TERM_BUDGET;
    let other = match series {
        PairSeries::Odd => PairSeries::Even,
        PairSeries::Even => PairSeries::Odd,
    };
    let norm = sum_pair_series(other, gain, rel_eps, budget)?;
    let y = gain.tanh_sq();
    let one_minus_y = gain.one_minus_tanh_sq();
    // both means are below 4·C²
    let scale = gain.cosh() * gain.cosh();
    let weighted = match series {
        // (2k+1) f(k): ratio Γ²(2k+3)²/((2k+1)(2k+2))
        PairSeries::Odd => sum_certified(
            |k| PairSeries::Odd.ln_weight(k, gain) + ((2 * k + 1) as f64).ln(),
            |k| {
                let a = (2 * k + 1) as f64;
                let excess = y * (3.0 * a + 4.0) / (a * (a + 1.0));
                one_minus_y - excess
            },
            0,
            rel_eps * scale,
            budget,
        )?,
        // 2k h(k), k >= 1: ratio Γ²(2k+1)/(2k)
        PairSeries::Even => {
            if gain.g() == 0.0 {
                return Ok(0.0);
            }
            sum_certified(
                |k| PairSeries::Even.ln_weight(k, gain) + ((2 * k) as f64).ln(),
                |k| one_minus_y - y / (2 * k) as f64,
                1,
                rel_eps * scale,
                budget,
            )?
        }
    };
    Ok(weighted.sum * norm.sum)
}

/// Probability that a Macro-state holds more than `2·max_pairs + 1`
/// photons in total, i.e. `P(i + j > max_pairs)`.
///
/// The pair total `s = i + j` has the closed-form law
/// `P(s) = C⁻⁴ (s + 1) Γ^{2s}`.
pub fn total_pairs_tail(gain: &GainParams, max_pairs: u64) -> f64 {
    let y = gain.tanh_sq();
    if y == 0.0 {
        return 0.0;
    }
    let s = max_pairs as f64;
    let ln_pow = (s + 1.0) * 2.0 * gain.ln_tanh();
    // (S+2) − (S+1)y = 1 + (S+1)(1−y)
    let poly = 1.0 + (s + 1.0) * gain.one_minus_tanh_sq();
    (ln_pow + poly.ln()).exp()
}
