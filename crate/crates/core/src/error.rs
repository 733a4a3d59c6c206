use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("time {t:e} s outside [0, {horizon:e}] s")]
    Range { t: f64, horizon: f64 },

    #[error("outside model domain: {0}")]
    Domain(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
