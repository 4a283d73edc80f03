use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// Natural parameters outside the interior of the log-partition domain.
    #[error("natural parameters outside the family domain: {0}")]
    DomainViolation(String),

    /// Mean parameters outside the interior of dom A*.
    #[error("mean parameters outside the dual domain: {0}")]
    DualDomainViolation(String),

    #[error("quadrature oracle failed: {0}")]
    OracleFailure(String),

    #[error("regularizer {regularizer} is not supported for the {family} family")]
    UnsupportedRegularizer { regularizer: &'static str, family: &'static str },
}
