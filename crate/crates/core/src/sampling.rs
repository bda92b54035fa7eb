//! Exact sampling of Macro-state photon numbers at arbitrary gain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainParams;
use crate::logspace::KahanSum;
use crate::macrostate::{FockOccupation, MacroLabel, PairSeries, DEFAULT_TERM_BUDGET};

/// Identifies one independent random stream: a ChaCha8 key derived from
/// `seed` and the stream counter `stream_id`.
///
/// The stream depends only on the pair, never on which thread draws from
/// it or in what order trials run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream `index` inside a named sub-domain of `seed`.
    pub fn in_domain(seed: u64, domain: u64, index: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(domain)), index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Cumulative tables of the two independent pair-index laws `f(i)` and
/// `h(j)` whose product is the Macro-state occupation probability.
#[derive(Debug, Clone)]
pub struct MarginalTables {
    gain: GainParams,
    cdf_i: Vec<f64>,
    cdf_j: Vec<f64>,
    tail_epsilon: f64,
}

impl MarginalTables {
    pub fn build(gain: GainParams, tail_epsilon: f64) -> Result<Self> {
        if !(tail_epsilon > 0.0 && tail_epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tail_epsilon",
                value: tail_epsilon,
                reason: "must be positive and finite",
            });
        }
        Ok(Self {
            gain,
            cdf_i: cumulative(PairSeries::Odd, &gain, tail_epsilon, DEFAULT_TERM_BUDGET)?,
            cdf_j: cumulative(PairSeries::Even, &gain, tail_epsilon, DEFAULT_TERM_BUDGET)?,
            tail_epsilon,
        })
    }

    pub fn gain(&self) -> &GainParams {
        &self.gain
    }

    pub fn cdf_i(&self) -> &[f64] {
        &self.cdf_i
    }

    pub fn cdf_j(&self) -> &[f64] {
        &self.cdf_j
    }

    pub fn tail_epsilon(&self) -> f64 {
        self.tail_epsilon
    }

    fn draw(cdf: &[f64], u: f64) -> u64 {
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
    }

    /// Draws the pair indices `(i, j)`.
    pub fn sample_pairs<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        let i = Self::draw(&self.cdf_i, rng.random::<f64>());
        let j = Self::draw(&self.cdf_j, rng.random::<f64>());
        (i, j)
    }
}

fn cumulative(series: PairSeries, gain: &GainParams, eps: f64, budget: usize) -> Result<Vec<f64>> {
    let mut cdf = Vec::new();
    let mut acc = KahanSum::default();
    let mut k = 0u64;
    let mut term = series.weight(0, gain);
    let mut tail = f64::INFINITY;
    while cdf.len() < budget {
        acc.add(term);
        cdf.push(acc.total());
        let next = series.weight(k + 1, gain);
        let gap = series.one_minus_ratio(k + 1, gain);
        tail = if next == 0.0 {
            0.0
        } else if gap > 0.0 {
            next / gap
        } else {
            f64::INFINITY
        };
        if tail < eps {
            return Ok(cdf);
        }
        term = next;
        k += 1;
    }
    Err(Error::NonConvergence { budget, tail })
}

/// Draws `(p, q)` of `label` in the label's own basis by inverse-CDF
/// lookup: `(2i+1, 2j)` for `Φ^φ`, `(2j, 2i+1)` for `Φ^φ⊥`.
pub fn sample_occupation<R: Rng + ?Sized>(
    label: MacroLabel,
    tables: &MarginalTables,
    rng: &mut R,
) -> FockOccupation {
    let (i, j) = tables.sample_pairs(rng);
    let occ = FockOccupation::new(2 * i + 1, 2 * j);
    if label.is_parallel() {
        occ
    } else {
        occ.swapped()
    }
}

/// Draws `(h, v)` of `Φ^H` (or `Φ^V`) in the H/V basis.
///
/// `Φ^{H,V} = (Φ^+ ± Φ^−)/√2`, and `Φ^±` are orthogonal inside every
/// total-number sector, so the total `n` is distributed as for `Φ^+`;
/// within a sector `Φ^H` has the single occupation `h − v = +1`.
pub fn sample_linear_occupation<R: Rng + ?Sized>(
    horizontal: bool,
    tables: &MarginalTables,
    rng: &mut R,
) -> FockOccupation {
    let (i, j) = tables.sample_pairs(rng);
    let occ = FockOccupation::new(i + j + 1, i + j);
    if horizontal {
        occ
    } else {
        occ.swapped()
    }
}

/// Alice's single-photon outcome in the equatorial basis `φ_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AliceOutcome {
    /// Projection on `|1φ_A⟩`.
    Plus,
    /// Projection on `|1φ_A⊥⟩`.
    Perp,
}

impl AliceOutcome {
    /// Phase of the projector that fired.
    pub fn projector_phase(self, phi_a: f64) -> f64 {
        match self {
            AliceOutcome::Plus => phi_a,
            AliceOutcome::Perp => phi_a + std::f64::consts::PI,
        }
    }
}

/// Probabilities that Bob holds `Φ^{φ_B}` or `Φ^{φ_B⊥}` given Alice's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureWeights {
    pub w_parallel: f64,
    pub w_perp: f64,
}

/// Bob's conditional ensemble after Alice's projection of the singlet-type
/// Micro–Macro state.
///
/// With `Δ = φ_B − φ_A` and Alice projecting on `|1φ_A⟩`, Bob is left in
/// `⟨φ_A|φ_B⊥⟩|Φ^{φ_B}⟩ − ⟨φ_A|φ_B⟩|Φ^{φ_B⊥}⟩`, i.e. weights `sin²(Δ/2)`
/// and `cos²(Δ/2)`. The two components occupy disjoint parity sectors in
/// the `φ_B` photon-number basis, so the coherent superposition and the
/// incoherent mixture have identical counting statistics there.
pub fn conditional_mixture(phi_a: f64, outcome: AliceOutcome, phi_b: f64) -> MixtureWeights {
    let delta = phi_b - phi_a;
    let s = (0.5 * delta).sin().powi(2);
    let c = (0.5 * delta).cos().powi(2);
    match outcome {
        AliceOutcome::Plus => MixtureWeights {
            w_parallel: s,
            w_perp: c,
        },
        AliceOutcome::Perp => MixtureWeights {
            w_parallel: c,
            w_perp: s,
        },
    }
}

/// Fair coin: each Alice outcome has probability 1/2 in any equatorial basis.
pub fn sample_alice<R: Rng + ?Sized>(_phi_a: f64, rng: &mut R) -> AliceOutcome {
    if rng.random::<bool>() {
        AliceOutcome::Plus
    } else {
        AliceOutcome::Perp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macrostate::{mean_photon_number, occupation_probability, Mode, MomentMethod};
    use std::collections::HashMap;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn tables(g: f64) -> MarginalTables {
        MarginalTables::build(GainParams::new(g).unwrap(), 1e-12).unwrap()
    }

    #[test]
    fn zero_gain_tables_are_point_masses() {
        let t = tables(0.0);
        assert_eq!(t.cdf_i(), &[1.0]);
        assert_eq!(t.cdf_j(), &[1.0]);
        let mut rng = RngStream::new(1, 0).rng();
        for _ in 0..100 {
            assert_eq!(
                sample_occupation(MacroLabel::plus(0.3), &t, &mut rng),
                FockOccupation::new(1, 0)
            );
        }
    }

    #[test]
    fn cdfs_are_monotone_and_complete() {
        for g in [0.5, 1.6, 4.4] {
            let t = tables(g);
            for cdf in [t.cdf_i(), t.cdf_j()] {
                assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
                let last = *cdf.last().unwrap();
                assert!(
                    last >= 1.0 - t.tail_epsilon() && last <= 1.0 + 1e-12,
                    "{last}"
                );
            }
        }
        let t = tables(4.4);
        assert!(t.cdf_i().len() > 10_000);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let g = GainParams::new(1.0).unwrap();
        assert!(MarginalTables::build(g, 0.0).is_err());
        assert!(MarginalTables::build(g, f64::NAN).is_err());
    }

    #[test]
    fn sampled_mean_matches_moment() {
        let t = tables(1.6);
        let mut rng = RngStream::new(42, 7).rng();
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let p = sample_occupation(MacroLabel::plus(0.0), &t, &mut rng).p as f64;
            sum += p;
            sum_sq += p * p;
        }
        let mean = sum / n as f64;
        let sd = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        let want = mean_photon_number(
            MacroLabel::plus(0.0),
            Mode::Parallel,
            t.gain(),
            MomentMethod::Analytic,
        )
        .unwrap();
        assert!((mean - want).abs() < 3.0 * sd, "{mean} vs {want} ± {sd}");
    }

    #[test]
    fn swap_symmetry_is_exact() {
        let t = tables(1.2);
        let mut a = RngStream::new(3, 9).rng();
        let mut b = RngStream::new(3, 9).rng();
        for _ in 0..1000 {
            let x = sample_occupation(MacroLabel::plus(0.0), &t, &mut a);
            let y = sample_occupation(MacroLabel::perp(0.0), &t, &mut b);
            assert_eq!(x, y.swapped());
        }
    }

    #[test]
    fn histogram_tracks_exact_law() {
        let g = GainParams::new(0.8).unwrap();
        let t = MarginalTables::build(g, 1e-12).unwrap();
        let label = MacroLabel::perp(1.0);
        let mut rng = RngStream::new(11, 0).rng();
        let n = 200_000;
        let mut hist: HashMap<FockOccupation, u64> = HashMap::new();
        for _ in 0..n {
            *hist
                .entry(sample_occupation(label, &t, &mut rng))
                .or_default() += 1;
        }
        let mut tv = 0.0;
        let mut covered = 0.0;
        for p in 0..120u64 {
            for q in 0..120u64 {
                let occ = FockOccupation::new(p, q);
                let exact = occupation_probability(label, occ, &g);
                covered += exact;
                let emp = *hist.get(&occ).unwrap_or(&0) as f64 / n as f64;
                tv += (exact - emp).abs();
            }
        }
        tv = 0.5 * (tv + (1.0 - covered));
        assert!(tv < 0.01, "TV {tv}");
    }

    #[test]
    fn mixture_weights_examples() {
        let w = conditional_mixture(0.4, AliceOutcome::Plus, 0.4);
        assert_eq!((w.w_parallel, w.w_perp), (0.0, 1.0));
        let w = conditional_mixture(0.0, AliceOutcome::Plus, PI);
        assert!((w.w_parallel - 1.0).abs() < 1e-15 && w.w_perp < 1e-15);
        let w = conditional_mixture(0.0, AliceOutcome::Perp, FRAC_PI_2);
        assert!((w.w_parallel - 0.5).abs() < 1e-15 && (w.w_perp - 0.5).abs() < 1e-15);
        let w = conditional_mixture(0.0, AliceOutcome::Perp, 0.0);
        assert_eq!((w.w_parallel, w.w_perp), (1.0, 0.0));
    }

    #[test]
    fn alice_is_fair_and_reproducible() {
        let n = 100_000;
        for phi in [0.0, 1.0, 4.0] {
            let mut rng = RngStream::new(5, 1).rng();
            let plus = (0..n)
                .filter(|_| sample_alice(phi, &mut rng) == AliceOutcome::Plus)
                .count() as f64;
            let sd = (0.25 / n as f64).sqrt();
            assert!((plus / n as f64 - 0.5).abs() < 3.0 * sd);
        }
        let draw = |s: RngStream| {
            let mut rng = s.rng();
            (0..64)
                .map(|_| sample_alice(0.0, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(RngStream::new(8, 2)), draw(RngStream::new(8, 2)));
        assert_ne!(draw(RngStream::new(8, 2)), draw(RngStream::new(8, 3)));
    }

    #[test]
    fn streams_are_order_independent() {
        let draw = |id: u64| RngStream::in_domain(99, 4, id).rng().random::<u64>();
        let forward: Vec<u64> = (0..50).map(draw).collect();
        let backward: Vec<u64> = (0..50)
            .rev()
            .map(draw)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(forward, backward);
        assert_ne!(
            RngStream::in_domain(99, 4, 0).rng().random::<u64>(),
            RngStream::in_domain(99, 5, 0).rng().random::<u64>()
        );
    }
}
