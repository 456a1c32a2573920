use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("field is not mean-zero: |mean| = {mean:.3e} exceeds tolerance {tol:.0e}")]
    NotMeanZero { mean: f64, tol: f64 },

    #[error("grid mismatch: expected {expected} points per dimension, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("time step {dt:.6e} exceeds stability limit {limit:.6e}")]
    TimeStepTooLarge { dt: f64, limit: f64 },

    #[error("blow-up guard tripped at t = {t:.6}: L2 norm grew by {growth:.3e} in one step")]
    BlowUp { t: f64, growth: f64 },

    #[error("value {value:.6e} is outside the range of the rate function")]
    RateOutOfRange { value: f64 },

    #[error("viscosity {nu:.3e} too large for enhancement regime: condition infeasible at bracket floor")]
    EnhancementInfeasible { nu: f64 },

    #[error("flow has zero velocity gradient; bound requires a positive sup norm")]
    ZeroGradientFlow,

    #[error("{0}")]
    Persist(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
