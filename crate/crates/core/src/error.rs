use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid gain {0}: must be finite and non-negative")]
    InvalidGain(f64),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("series did not converge within {budget} terms (remaining tail bound {tail:e})")]
    NonConvergence { budget: usize, tail: f64 },

    #[error("cutoff {cutoff} leaves tail mass {tail:e} > {max_tail:e}; need cutoff >= {required}")]
    CutoffTooSmall {
        cutoff: usize,
        tail: f64,
        max_tail: f64,
        required: usize,
    },

    #[error("dense state exceeds the oracle size limit (cutoff {cutoff} > {limit})")]
    CutoffTooLarge { cutoff: usize, limit: usize },

    #[error("superposition weights not normalized: sum |w|^2 = {0}")]
    UnnormalizedWeights(f64),

    #[error("states are not comparable: {0}")]
    Mismatch(&'static str),

    #[error("no conclusive events")]
    NoData,

    #[error("duplicate basis index {0} in visibility list")]
    DuplicateBasis(u8),

    #[error("density matrix is not physical: eigenvalues {0:?}")]
    NonPhysical(Vec<f64>),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
