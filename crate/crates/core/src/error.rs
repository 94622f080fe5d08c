use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("{name} = {value} is not a probability in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("confidence level {0} must lie strictly between 0 and 1")]
    InvalidConfidence(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "quantile at level {alpha} cannot be resolved: only {resolved_mass} of the mass is retained after tail truncation"
    )]
    QuantileUnresolved { alpha: f64, resolved_mass: f64 },

    #[error("support of {trials} trials exceeds the configured limit of {limit}")]
    SupportLimit { trials: u64, limit: u64 },

    #[error("empty loss histogram")]
    EmptyHistogram,

    #[error("expected loss is zero, relative risk is undefined")]
    ZeroExpectedLoss,

    #[error("malformed table at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, RiskError>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(RiskError::InvalidProbability { name, value })
    }
}
