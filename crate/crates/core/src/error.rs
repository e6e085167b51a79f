use thiserror::Error;

/// Errors surfaced by the learning architecture and its experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("goal map is full ({capacity} selector slots)")]
    CapacityExceeded { capacity: usize },

    #[error("unknown goal id {0}")]
    UnknownGoal(usize),

    #[error("no goals discovered yet")]
    EmptyRepertoire,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("snapshot version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("metrics schema error: {0}")]
    Schema(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
