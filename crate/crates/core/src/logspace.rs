//! Log-space combinatorics.
//!
//! Photon numbers at gain 6 reach ~10^5 and the Fock expansion coefficients
//! involve factorials of that size, so every combinatorial factor is kept
//! as a logarithm until a final probability is formed.

use std::f64::consts::PI;
use std::sync::OnceLock;

const FACTORIAL_TABLE_LEN: usize = 256;
const CENTRAL_TABLE_LEN: usize = 32;

fn factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; FACTORIAL_TABLE_LEN];
        for n in 2..FACTORIAL_TABLE_LEN {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

fn central_table() -> &'static [f64; CENTRAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; CENTRAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; CENTRAL_TABLE_LEN];
        for k in 1..CENTRAL_TABLE_LEN {
            t[k] = t[k - 1] + (-0.5 / k as f64).ln_1p();
        }
        t
    })
}

/// `ln(n!)`, exact table below 256 and a Stirling series above.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < FACTORIAL_TABLE_LEN {
        return factorial_table()[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln() + series
}

/// `ln(C(2n, n) / 4^n)`.
///
/// The `4^n` is folded in so that the combination `(Γ²/4)^n C(2n,n)`
/// appearing in the Macro-state weights never forms two large logarithms
/// that cancel.
pub fn ln_central_binomial_scaled(n: u64) -> f64 {
    if (n as usize) < CENTRAL_TABLE_LEN {
        return central_table()[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (-1.0 / 8.0
            + inv2
                * (1.0 / 192.0
                    + inv2 * (-1.0 / 640.0 + inv2 * (17.0 / 14336.0 - inv2 * 31.0 / 18432.0))));
    -0.5 * (PI * x).ln() + series
}

/// A real number stored as sign and log-magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub negative: bool,
    /// `ln|x|`; `-inf` encodes zero.
    pub ln_abs: f64,
}

impl SignedLog {
    pub fn sign(&self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }

    pub fn value(&self) -> f64 {
        self.sign() * self.ln_abs.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
