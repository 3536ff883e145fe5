//! File formats, the Monte-Carlo harness and CLI support for `rmee-core`.

pub mod csv_io;
mod error;
pub mod experiment;
pub mod model_io;

pub use error::{BenchError, Result};
