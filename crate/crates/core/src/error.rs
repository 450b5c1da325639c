use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the posterior computations.
///
/// Variants carry a stable short code (see [`Error::code`]) so callers can
/// report failures in a machine-parsable form.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: &'static str },

    #[error("sample size n = {n} is below the minimum {min}")]
    SampleSizeTooSmall { n: u64, min: u64 },

    #[error("non-finite value for `{name}`")]
    NonFinite { name: &'static str },

    #[error("observation at level {level} has {got} entries, expected {expected}")]
    LengthMismatch { level: u32, expected: usize, got: usize },

    #[error("weight w = {weight:e} at level {level} violates {bound}")]
    WeightRule { level: u32, weight: f64, bound: &'static str },

    #[error("no integer level fits the bracket for n = {n}")]
    BracketEmpty { n: u64 },

    #[error("sieve too large: {points} points (limit {limit})")]
    SieveTooLarge { points: u128, limit: u128 },

    #[error("admissible partition check failed: {0}")]
    Partition(&'static str),

    #[error("no importance draw reached the tail event (radius {radius:e})")]
    TailUnresolved { radius: f64 },
}

impl Error {
    /// Short, stable identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::SampleSizeTooSmall { .. } => "sample_size",
            Error::NonFinite { .. } => "non_finite",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::WeightRule { .. } => "weight_rule",
            Error::BracketEmpty { .. } => "n_too_small",
            Error::SieveTooLarge { .. } => "sieve_too_large",
            Error::Partition(_) => "partition",
            Error::TailUnresolved { .. } => "tail_unresolved",
        }
    }
}
