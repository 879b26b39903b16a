//! Files, command line and benchmarks around `momentbody-core`.

#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod format;

pub use error::AppError;
