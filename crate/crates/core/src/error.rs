use thiserror::Error;

/// Failure modes shared across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fugacity-at-radius: term ratio alpha/g_n(k) stayed above 1 - 1e-6 up to k = {cap} (alpha = {alpha})")]
    FugacityAtRadius { alpha: f64, cap: usize },

    #[error("density-unreachable: rho = {rho} exceeds the largest reachable mean occupation {sup}")]
    DensityUnreachable { rho: f64, sup: f64 },

    #[error("q-parameter-out-of-range: alpha/sqrt(n) = {ratio} must be < 1")]
    QParameterOutOfRange { ratio: f64 },

    #[error("frozen-state: total jump rate is zero")]
    FrozenState,

    #[error("empty-site-jump: site {site} is empty")]
    EmptySiteJump { site: usize },

    #[error("inconsistent-ring: {0}")]
    InconsistentRing(String),

    #[error("decoupled: exclusion image disagrees with the zero-range state after event {event}")]
    Decoupled { event: u64 },

    #[error("state-space-too-large: {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },

    #[error("not-centered: mean of F is {mean:e}")]
    NotCentered { mean: f64 },

    #[error("missing-observer: integrand `{0}` was not recorded")]
    MissingObserver(String),

    #[error("epsilon-too-small: floor(eps * n) = 0 for eps = {eps}, n = {n}")]
    EpsilonTooSmall { eps: f64, n: u32 },

    #[error("unknown rate function `{0}` (expected qtasep, tanh or linear)")]
    UnknownRate(String),

    #[error("invalid-config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
