use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A log-based statistic met a value outside its domain (non-positive or non-finite).
    #[error("domain error: {0}")]
    Domain(String),

    /// An Euler step produced a non-positive income multiplier.
    #[error(
        "step size too large: individual {individual} drew zeta = {zeta}, \
         giving multiplier {multiplier} <= 0; shrink dt or use exact stepping"
    )]
    StepSize {
        individual: usize,
        zeta: f64,
        multiplier: f64,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("year {year}: {source}")]
    InYear {
        year: i32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn in_year(self, year: i32) -> Self {
        Error::InYear {
            year,
            source: Box::new(self),
        }
    }
}
