use thiserror::Error;

/// Exit code for bad command lines (`EX_USAGE`).
pub const EXIT_USAGE: i32 = 64;
/// Exit code for malformed or rejected input data (`EX_DATAERR`).
pub const EXIT_DATA: i32 = 65;
/// Exit code for unreadable or unwritable files (`EX_IOERR`).
pub const EXIT_IO: i32 = 74;
/// Exit code for failures inside the solver stack (`EX_SOFTWARE`).
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("{source_name}:{line}:{column}: {message}")]
    Json {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("certificate rejected: {0}")]
    Rejected(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] momentbody_core::Error),

    #[error("{0}")]
    Internal(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        use momentbody_core::Error as E;
        match self {
            AppError::Usage(_) => EXIT_USAGE,
            AppError::Json { .. } | AppError::Schema { .. } | AppError::Rejected(_) => EXIT_DATA,
            AppError::Io { .. } => EXIT_IO,
            AppError::Core(E::InvalidConfig(_) | E::NotPreconditioned) => EXIT_USAGE,
            AppError::Core(
                E::InvalidInput(_)
                | E::DimensionMismatch { .. }
                | E::RankDeficient { .. }
                | E::MissingBlockStructure
                | E::BlockViolation { .. }
                | E::NotUnit { .. }
                | E::PreconditionFailed { .. },
            ) => EXIT_DATA,
            AppError::Core(_) | AppError::Internal(_) => EXIT_INTERNAL,
        }
    }
}
