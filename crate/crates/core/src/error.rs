use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("credential rejected by {url}: HTTP {status}")]
    Credential { url: String, status: u16 },

    #[error("rate limited by {url} after {attempts} attempts")]
    RateLimited { url: String, attempts: u32 },

    #[error("incomplete pagination for {url}: {detail}")]
    Incomplete { url: String, detail: String },

    #[error("HTTP {status} from {url}")]
    Http { url: String, status: u16 },

    #[error("network failure: {0}")]
    Network(String),

    #[error("parse error at line {line}{}: {msg}", id.map(|i| format!(" (record {i})")).unwrap_or_default())]
    Parse { line: usize, id: Option<u64>, msg: String },

    #[error("invalid record {id}: {msg}")]
    Validation { id: u64, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("insufficient data in arm {arm}: {have} usable MRs, need {need}")]
    InsufficientData { arm: String, have: usize, need: usize },

    #[error("classifier protocol: {0}")]
    Protocol(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Credential { .. } => "credential",
            Error::RateLimited { .. } => "rate_limit",
            Error::Incomplete { .. } => "incomplete",
            Error::Http { .. } => "http",
            Error::Network(_) => "network",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Domain(_) => "domain",
            Error::Undefined(_) => "undefined",
            Error::NotApplicable(_) => "not_applicable",
            Error::Consistency(_) => "consistency",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Protocol(_) => "protocol",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn undefined(msg: impl Into<String>) -> Self {
        Error::Undefined(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse {
                line,
                id: None,
                msg: format!("{other:?}"),
            },
        }
    }
}
