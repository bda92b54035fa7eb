//! Detection chain on the amplified mode: binomial loss, photomultiplier
//! response and the Orthogonality Filter.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macrostate::FockOccupation;

/// How the filter threshold is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// In detected-signal units.
    Absolute(f64),
    /// Multiple of the mean detected signal per arm, measured in a
    /// calibration run.
    MeanSignalMultiple(f64),
}

impl Threshold {
    fn value(&self) -> f64 {
        match *self {
            Threshold::Absolute(v) | Threshold::MeanSignalMultiple(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Overall efficiency of the amplified-mode detection.
    pub eta_b: f64,
    /// Trigger efficiency on the single-photon side.
    pub eta_a: f64,
    /// Relative Gaussian spread of the photomultiplier gain; 0 is noiseless.
    pub pm_noise: f64,
    pub threshold: Threshold,
}

impl DetectionParams {
    pub fn new(eta_b: f64, eta_a: f64, pm_noise: f64, threshold: Threshold) -> Result<Self> {
        let params = Self {
            eta_b,
            eta_a,
            pm_noise,
            threshold,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "efficiency must lie in [0, 1]",
                })
            }
        };
        unit("eta_b", self.eta_b)?;
        unit("eta_a", self.eta_a)?;
        if !(self.pm_noise >= 0.0 && self.pm_noise.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "pm_noise",
                value: self.pm_noise,
                reason: "must be finite and non-negative",
            });
        }
        let t = self.threshold.value();
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "threshold",
                value: t,
                reason: "must be finite and non-negative",
            });
        }
        Ok(())
    }
}

/// Signals on the two analyzer arms, `I_+` on `π_φ` and `I_−` on `π_φ⊥`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub detected_plus: f64,
    pub detected_minus: f64,
}

impl DetectionEvent {
    pub fn new(detected_plus: f64, detected_minus: f64) -> Self {
        Self {
            detected_plus,
            detected_minus,
        }
    }

    pub fn swapped(self) -> Self {
        Self::new(self.detected_minus, self.detected_plus)
    }

    pub fn difference(&self) -> f64 {
        self.detected_plus - self.detected_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OfOutcome {
    /// Eigenvalue +1: `Φ^φ` inferred.
    Plus,
    /// Eigenvalue −1: `Φ^φ⊥` inferred.
    Minus,
    Inconclusive,
}

impl OfOutcome {
    pub fn is_conclusive(self) -> bool {
        !matches!(self, OfOutcome::Inconclusive)
    }

    pub fn from_sign(sign: i8) -> Self {
        match sign.signum() {
            1 => OfOutcome::Plus,
            -1 => OfOutcome::Minus,
            _ => OfOutcome::Inconclusive,
        }
    }
}

/// Each of `count` photons survives independently with probability `eta`.
///
/// Sampled exactly (BINV / BTPE), no Gaussian or Poisson approximation.
pub fn thin_binomial<R: Rng + ?Sized>(count: u64, eta: f64, rng: &mut R) -> u64 {
    if eta >= 1.0 || count == 0 {
        return count;
    }
    if eta <= 0.0 {
        return 0;
    }
    Binomial::new(count, eta)
        .expect("eta validated to lie in (0, 1)")
        .sample(rng)
}

/// Photomultiplier signal for `count` detected photons:
/// `count·(1 + ε)` with `ε ~ N(0, pm_noise²)`, clamped at zero.
pub fn pm_response<R: Rng + ?Sized>(count: u64, params: &DetectionParams, rng: &mut R) -> f64 {
    if params.pm_noise == 0.0 {
        return count as f64;
    }
    let eps = Normal::new(0.0, params.pm_noise)
        .expect("pm_noise validated")
        .sample(rng);
    (count as f64 * (1.0 + eps)).max(0.0)
}

/// `Plus` iff `I_+ − I_− > threshold`, `Minus` iff `I_− − I_+ > threshold`.
/// Differences exactly at the threshold are inconclusive.
pub fn orthogonality_filter(event: &DetectionEvent, threshold: f64) -> OfOutcome {
    let d = event.difference();
    if d > threshold {
        OfOutcome::Plus
    } else if -d > threshold {
        OfOutcome::Minus
    } else {
        OfOutcome::Inconclusive
    }
}

/// `+1` if the `π_φ` count is odd, `−1` if even.
pub fn ideal_parity_discriminator(occ: FockOccupation) -> i8 {
    if occ.p % 2 == 1 {
        1
    } else {
        -1
    }
}

/// Sign of `h − v`; `None` when the arms are equal.
pub fn ideal_difference_discriminator(occ: FockOccupation) -> Option<i8> {
    match occ.p.cmp(&occ.q) {
        std::cmp::Ordering::Greater => Some(1),
        std::cmp::Ordering::Less => Some(-1),
        std::cmp::Ordering::Equal => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngStream;
    use proptest::prelude::*;

    fn noisy(pm_noise: f64) -> DetectionParams {
        DetectionParams::new(1.0, 1.0, pm_noise, Threshold::Absolute(0.0)).unwrap()
    }

    #[test]
    fn thinning_limits() {
        let mut rng = RngStream::new(0, 0).rng();
        assert_eq!(thin_binomial(1234, 1.0, &mut rng), 1234);
        assert_eq!(thin_binomial(1234, 0.0, &mut rng), 0);
        assert_eq!(thin_binomial(0, 0.3, &mut rng), 0);
    }

    #[test]
    fn thinned_mean() {
        let mut rng = RngStream::new(17, 0).rng();
        let reps = 100_000;
        let total: u64 = (0..reps).map(|_| thin_binomial(6630, 0.02, &mut rng)).sum();
        let mean = total as f64 / reps as f64;
        let sd = (6630.0 * 0.02 * 0.98 / reps as f64).sqrt();
        assert!((mean - 132.6).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn pm_response_examples() {
        let mut rng = RngStream::new(1, 1).rng();
        assert_eq!(pm_response(17, &noisy(0.0), &mut rng), 17.0);
        for _ in 0..100 {
            assert_eq!(pm_response(0, &noisy(0.5), &mut rng), 0.0);
            assert!(pm_response(3, &noisy(2.0), &mut rng) >= 0.0);
        }
        let reps = 100_000;
        let params = noisy(0.2);
        let mean = (0..reps)
            .map(|_| pm_response(100, &params, &mut rng))
            .sum::<f64>()
            / reps as f64;
        let sd = 100.0 * 0.2 / (reps as f64).sqrt();
        assert!((mean - 100.0).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn filter_examples() {
        assert_eq!(
            orthogonality_filter(&DetectionEvent::new(10.0, 2.0), 5.0),
            OfOutcome::Plus
        );
        assert_eq!(
            orthogonality_filter(&DetectionEvent::new(10.0, 2.0), 8.0),
            OfOutcome::Inconclusive
        );
        assert_eq!(
            orthogonality_filter(&DetectionEvent::new(2.0, 10.0), 5.0),
            OfOutcome::Minus
        );
        assert_eq!(
            orthogonality_filter(&DetectionEvent::new(4.0, 4.0), 0.0),
            OfOutcome::Inconclusive
        );
        assert_eq!(
            orthogonality_filter(&DetectionEvent::new(4.0, 3.0), 0.0),
            OfOutcome::Plus
        );
    }

    #[test]
    fn ideal_discriminators() {
        assert_eq!(ideal_parity_discriminator(FockOccupation::new(1, 0)), 1);
        assert_eq!(ideal_parity_discriminator(FockOccupation::new(2, 1)), -1);
        assert_eq!(
            ideal_difference_discriminator(FockOccupation::new(3, 2)),
            Some(1)
        );
        assert_eq!(
            ideal_difference_discriminator(FockOccupation::new(2, 3)),
            Some(-1)
        );
        assert_eq!(
            ideal_difference_discriminator(FockOccupation::new(2, 2)),
            None
        );
    }

    #[test]
    fn params_are_validated() {
        assert!(DetectionParams::new(1.1, 1.0, 0.0, Threshold::Absolute(1.0)).is_err());
        assert!(DetectionParams::new(0.5, -0.1, 0.0, Threshold::Absolute(1.0)).is_err());
        assert!(DetectionParams::new(0.5, 1.0, -1.0, Threshold::Absolute(1.0)).is_err());
        assert!(DetectionParams::new(0.5, 1.0, 0.0, Threshold::MeanSignalMultiple(-8.0)).is_err());
        assert!(DetectionParams::new(0.02, 0.05, 0.0, Threshold::MeanSignalMultiple(8.0)).is_ok());
    }

    proptest! {
        #[test]
        fn filter_is_arm_symmetric(a in 0.0f64..1e4, b in 0.0f64..1e4, t in 0.0f64..1e3) {
            let e = DetectionEvent::new(a, b);
            let direct = orthogonality_filter(&e, t);
            let mirrored = orthogonality_filter(&e.swapped(), t);
            let expected = match direct {
                OfOutcome::Plus => OfOutcome::Minus,
                OfOutcome::Minus => OfOutcome::Plus,
                OfOutcome::Inconclusive => OfOutcome::Inconclusive,
            };
            prop_assert_eq!(mirrored, expected);
        }

        #[test]
        fn zero_threshold_accepts_unequal_arms(a in 0u32..10_000, b in 0u32..10_000) {
            let outcome = orthogonality_filter(&DetectionEvent::new(a as f64, b as f64), 0.0);
            prop_assert_eq!(outcome.is_conclusive(), a != b);
        }

        #[test]
        fn acceptance_region_shrinks_with_threshold(a in 0.0f64..1e3, b in 0.0f64..1e3, t1 in 0.0f64..500.0, dt in 0.0f64..500.0) {
            let e = DetectionEvent::new(a, b);
            let high = orthogonality_filter(&e, t1 + dt);
            if high.is_conclusive() {
                prop_assert_eq!(orthogonality_filter(&e, t1), high);
            }
        }
    }
}
