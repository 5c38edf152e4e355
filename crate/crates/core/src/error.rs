use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("invalid SNR interval [{lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("degenerate mode interval [{lo}, {hi}): no probability mass")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("{link} link design is entirely in outage")]
    AllOutage { link: &'static str },

    #[error("relay link never leaves outage but retransmissions are required")]
    RelayAlwaysInOutage,

    #[error("retransmission budget {nr} exceeds the enumeration limit {limit}")]
    RetransmissionBudget { nr: usize, limit: usize },

    #[error("bracket [{lo_db}, {hi_db}] dB does not straddle the target PLR {target}")]
    BracketNotStraddling { lo_db: f64, hi_db: f64, target: f64 },

    #[error("incompatible simulation statistics: {0}")]
    IncompatibleStats(String),

    #[error("failed to parse {what} at line {line}, column {column}: {message}")]
    Parse {
        what: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot access {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(what: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            what: what.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
