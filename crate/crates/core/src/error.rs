use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants split into input problems (bad records, bad configuration),
/// numeric failures (singular systems, rank deficiency), and stale cached
/// artifacts. Callers map these onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate patent id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular system for year {year}: {detail}")]
    Singular { year: i32, detail: String },

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("stale artifact: {0}")]
    Stale(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code: 1 input, 2 numeric, 3 stale cache.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. } | Error::RankDeficient { .. } | Error::Numeric(_) => 2,
            Error::Stale(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
