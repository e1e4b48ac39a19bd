use thiserror::Error;

/// Errors surfaced by the simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Sensing-channel gain makes Eq.-style sample count diverge (deep fade
    /// or zero gain); the caller treats the slot as no-action.
    #[error("unsensable channel: sensing-channel gain too small for a finite sample count")]
    UnsensableChannel,

    /// Transmit power requested for a zero channel gain.
    #[error("zero channel gain: region 1, no transmission")]
    ZeroGain,

    /// Joint occupancy model would need 2^{n} states beyond the guard.
    #[error("joint model infeasible for {n} channels, use factored beliefs")]
    JointTooLarge { n: usize },

    /// Markov chain with no unique stationary distribution (alpha=0, beta=1).
    #[error("degenerate chain: no unique stationary distribution")]
    DegenerateChain,

    /// A Bayes update conditioned on a zero-probability observation.
    #[error("inconsistent observation: zero-probability conditioning")]
    InconsistentObservation,

    /// Optimal-policy recursion requested beyond its tractability guard.
    #[error("optimal policy infeasible at this size, use myopic policy")]
    OptimalInfeasible,

    /// Invalid parameter combination.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A hard simulator invariant was violated (policy or engine bug).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
