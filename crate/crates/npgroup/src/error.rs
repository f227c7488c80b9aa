use thiserror::Error;

/// Errors raised by the smoothing, testing, projection and selection layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The weighted normal matrix stayed singular after the ridge fallback;
    /// the bandwidth is too small to give the local fit enough support.
    #[error("singular local fit at design point {point_index}: bandwidth too small for local support")]
    SingularFit { point_index: usize },

    /// No bandwidth exponent satisfies both rate conditions for this (r, q).
    #[error("no bandwidth rate is feasible for r={r}, q={q}")]
    InfeasibleRates { r: usize, q: usize },

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { got: usize, needed: usize },

    #[error("window construction yields {got} cells, need at least 2")]
    TooFewCells { got: usize },

    /// Window size must be odd and at least 3.
    #[error("invalid window size p={p}: must be odd and >= 3")]
    InvalidWindowSize { p: usize },

    #[error("degenerate variance estimate tau2={tau2}")]
    DegenerateVariance { tau2: f64 },

    /// The tested group has no columns.
    #[error("tested group is empty")]
    EmptyGroup,

    /// Every column of the tested group is constant; no principal component
    /// direction exists.
    #[error("column {col} of the tested group is constant and no usable column remains")]
    DegenerateGroup { col: usize },

    #[error("covariance matrix is numerically zero")]
    DegenerateCovariance,

    /// Sample covariance cannot be inverted; typically d >= n or collinear
    /// covariates.
    #[error("singular sample covariance: collinear covariates or d >= n")]
    SingularCovariance,

    #[error("group map has no groups")]
    EmptyInput,

    #[error("invalid group map: {reason}")]
    InvalidGroups { reason: String },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
