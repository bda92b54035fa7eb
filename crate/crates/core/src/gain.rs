use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working point of the parametric amplifier.
///
/// `g` is the integrated nonlinear coupling. All derived constants are kept
/// alongside overflow-safe logarithms so that gains well beyond 6 can be
/// handled without forming `cosh g` directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GainParams {
    g: f64,
    cosh: f64,
    tanh: f64,
    mbar: f64,
    ln_cosh: f64,
    ln_tanh: f64,
    one_minus_tanh_sq: f64,
}

impl GainParams {
    pub fn new(g: f64) -> Result<Self> {
        if !g.is_finite() || g < 0.0 {
            return Err(Error::InvalidGain(g));
        }
        let e = (-2.0 * g).exp();
        let ln_cosh = g + e.ln_1p() - LN_2;
        let ln_tanh = (-e).ln_1p() - e.ln_1p();
        let sinh = 0.5 * (g.exp_m1() - (-g).exp_m1());
        Ok(Self {
            g,
            cosh: ln_cosh.exp(),
            tanh: ln_tanh.exp(),
            mbar: sinh * sinh,
            ln_cosh,
            ln_tanh,
            one_minus_tanh_sq: (-2.0 * ln_cosh).exp(),
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// `C = cosh g`.
    pub fn cosh(&self) -> f64 {
        self.cosh
    }

    /// `Γ = tanh g`.
    pub fn tanh(&self) -> f64 {
        self.tanh
    }

    /// Mean photon number per mode of the unseeded amplifier, `sinh² g`.
    pub fn mbar(&self) -> f64 {
        self.mbar
    }

    pub fn ln_cosh(&self) -> f64 {
        self.ln_cosh
    }

    /// `ln Γ`; `-inf` at zero gain.
    pub fn ln_tanh(&self) -> f64 {
        self.ln_tanh
    }

    /// `Γ²`, the asymptotic term ratio of every Fock series.
    pub fn tanh_sq(&self) -> f64 {
        self.tanh * self.tanh
    }

    /// `1 − Γ² = C⁻²`, computed without cancellation.
    pub fn one_minus_tanh_sq(&self) -> f64 {
        self.one_minus_tanh_sq
    }
}

impl TryFrom<f64> for GainParams {
    type Error = Error;

    fn try_from(g: f64) -> Result<Self> {
        GainParams::new(g)
    }
}

impl From<GainParams> for f64 {
    fn from(p: GainParams) -> f64 {
        p.g
    }
}

// frozen high-precision reference values
#[cfg(test)]
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gain_is_identity() {
        let p = GainParams::new(0.0).unwrap();
        assert_eq!(p.cosh(), 1.0);
        assert_eq!(p.tanh(), 0.0);
        assert_eq!(p.mbar(), 0.0);
        assert_eq!(p.ln_tanh(), f64::NEG_INFINITY);
    }

    #[test]
    fn reference_working_points() {
        // sinh^2 evaluated at 30 digits
        let p = GainParams::new(1.6).unwrap();
        assert!((p.mbar() - 5.643_323_100_271_929).abs() < 1e-12);
        let p = GainParams::new(4.4).unwrap();
        assert!((p.mbar() / 1658.061_039_252_740_1 - 1.0).abs() < 1e-13);
        let p = GainParams::new(6.0).unwrap();
        assert!((p.mbar() / 40_688.197_856_287_03 - 1.0).abs() < 1e-13);
        assert!((p.one_minus_tanh_sq() / 2.457_654_740_533_270_1e-5 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_gain() {
        assert!(GainParams::new(-0.1).is_err());
        assert!(GainParams::new(f64::NAN).is_err());
        assert!(GainParams::new(f64::INFINITY).is_err());
    }

    #[test]
    fn huge_gain_does_not_overflow_logs() {
        let p = GainParams::new(800.0).unwrap();
        assert!(p.ln_cosh().is_finite());
        assert_eq!(p.ln_tanh(), 0.0);
    }

    proptest! {
        #[test]
        fn derived_constants_are_consistent(g in 0.0f64..8.0) {
            let p = GainParams::new(g).unwrap();
            prop_assert!(p.cosh() >= 1.0);
            prop_assert!(p.tanh() >= 0.0 && p.tanh() < 1.0);
            let identity = p.cosh() * p.cosh() * p.tanh_sq();
            prop_assert!((p.mbar() - identity).abs() <= 1e-12 * p.mbar().max(1e-300));
            prop_assert!((p.one_minus_tanh_sq() - (1.0 - p.tanh_sq())).abs() < 1e-12);
        }
    }
}
