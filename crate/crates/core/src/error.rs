use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("signal-to-noise ratio is infinite (noise variance is zero)")]
    InfiniteSnr,
    #[error("singular normal matrix (condition estimate {condition:e})")]
    SingularNormalMatrix { condition: f64 },
    #[error("eigendecomposition did not converge")]
    Eigen,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
