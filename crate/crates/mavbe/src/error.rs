use thiserror::Error;

/// Errors reported by the estimator, baseline, and evaluation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("time step must be positive")]
    NonPositiveStep,

    #[error("{0} received no data")]
    EmptyInput(&'static str),

    #[error("{what}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("timestamps not strictly increasing at index {index}")]
    NonMonotonicTime { index: usize },

    #[error("filter state diverged (non-finite) at tick {tick}")]
    Diverged { tick: u64 },

    #[error("{what} ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("design matrix is rank deficient; samples do not determine a quadric")]
    DegenerateDesign,

    #[error("{0} requires a nonzero vector")]
    ZeroVector(&'static str),

    #[error("leveled field has no horizontal component; heading undefined")]
    DegenerateHeading,

    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),

    #[error("invalid filter configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("tracks do not overlap in time")]
    DisjointTimeRanges,
}
