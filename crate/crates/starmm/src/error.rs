use std::path::PathBuf;

/// Errors of the IO, config and harness layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] starmm_core::Error),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("need at least {needed} rows to fit a rate, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("{failed} of {total} replicates failed at n={n}, above the 5% limit")]
    TooManyFailures {
        n: usize,
        failed: usize,
        total: usize,
    },
    #[error("{0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code for `ERROR <code> <message>` lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(e) => e.code(),
            Error::Config(_) => "E_CONFIG",
            Error::Io { .. } => "E_IO",
            Error::Parse { .. } => "E_PARSE",
            Error::InsufficientRows { .. } => "E_INSUFFICIENT_ROWS",
            Error::TooManyFailures { .. } => "E_REPLICATES",
            Error::Invariant(_) => "E_INVARIANT",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use starmm_core::Error as C;
        match self {
            Error::Core(C::InvariantViolation(_)) | Error::Invariant(_) => EXIT_INVARIANT,
            Error::Core(C::NodeCapExceeded { .. }) | Error::Core(C::DepthExceeded { .. }) => {
                EXIT_RESOURCE
            }
            Error::TooManyFailures { .. } => EXIT_INVARIANT,
            _ => EXIT_CONFIG,
        }
    }
}
