use thiserror::Error;

pub type Result<T> = std::result::Result<T, AoiError>;

#[derive(Debug, Error)]
pub enum AoiError {
    /// A caller-supplied parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Argument of the threshold logarithm `e^{-λ} - λ²/2` is not positive.
    #[error("{what} is outside its domain at {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("bisection bracket [{lo}, {hi}] has no sign change (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("policy is incompatible with the system: {0}")]
    IncompatiblePolicy(String),

    /// An update was attempted with an empty battery. Always a policy bug.
    #[error("energy causality violated: update attempted with empty battery at t = {time}")]
    EnergyCausality { time: f64 },

    #[error("need at least {needed} complete epochs, got {got}")]
    TooFewEpochs { needed: usize, got: usize },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AoiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AoiError::InvalidParameter(msg.into())
    }
}
