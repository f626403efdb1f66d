use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid design: {0}")]
    Design(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    /// Input too short or degenerate for the requested statistic.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model fit did not converge: {0}")]
    NotConverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub(crate) fn check_open_unit(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "(0, 1)",
        })
    }
}

pub(crate) fn check_positive(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "(0, inf)",
        })
    }
}

pub(crate) fn check_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "finite reals",
        })
    }
}
