use thiserror::Error;

/// Errors raised by the pricing library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PricingError {
    #[error("non-admissible model: {0}")]
    NonAdmissible(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("no damping strip: {0}")]
    NoStrip(String),

    #[error("damping parameter w={w} outside the admissible range: {reason}")]
    DampingOutOfStrip { w: f64, reason: String },

    #[error("damping parameter w={0} sits on a pole of the kernel")]
    PoleAtW(f64),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("inversion failure: {0}")]
    InversionFailure(String),

    #[error("curve fit failure: {0}")]
    FitFailure(String),

    #[error("model is not Gaussian (m = {0} > 0)")]
    NotGaussianModel(usize),

    #[error("in-accrual valuation requires the realized accrual factor B_t/B_S")]
    MissingAccrualFactor,

    #[error("time {time} is not on the simulation grid (nearest node off by {offset})")]
    GridMismatch { time: f64, offset: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PricingError {
    fn from(e: std::io::Error) -> Self {
        PricingError::Io(e.to_string())
    }
}

impl From<csv::Error> for PricingError {
    fn from(e: csv::Error) -> Self {
        PricingError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PricingError>;
