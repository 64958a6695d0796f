//! File formats, reports and the command-line driver around `degkit-core`.

pub mod cli;
pub mod error;
pub mod files;
pub mod io;
pub mod report;

pub use error::{Error, Result};
