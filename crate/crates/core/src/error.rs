use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    /// No finite burst length satisfies the disruption threshold.
    #[error("unsatisfiable plan: segment loss probability {p_loss} never drops below threshold {threshold}")]
    Unsatisfiable { p_loss: f64, threshold: f64 },

    /// A scenario or configuration field is invalid.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("framing: {0}")]
    Framing(String),

    #[error("transport: {0}")]
    Transport(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { what, detail: detail.into() }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}
