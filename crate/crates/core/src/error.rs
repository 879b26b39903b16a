use alloc::string::String;

/// Errors raised by the membership pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// `I, A_1, ..., A_m` are (numerically) linearly dependent.
    #[error("centered Gram matrix is rank deficient (eigenvalue ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("map declares no block structure")]
    MissingBlockStructure,

    #[error("matrix {index} has a nonzero entry ({row}, {col}) outside its diagonal blocks")]
    BlockViolation {
        index: usize,
        row: usize,
        col: usize,
    },

    #[error("map is not flagged traceless and orthonormal; precondition it first")]
    NotPreconditioned,

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("back-mapped direction does not separate b from the moment body (gap {gap:e})")]
    NotASeparator { gap: f64 },

    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },

    #[error("line search failed: {0}")]
    LineSearchFailed(String),

    #[error("preconditioned map violates {what} (deviation {deviation:e})")]
    PreconditionFailed { what: &'static str, deviation: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
