//! File formats, corpus adapters and the command-line tool for `edst-core`.

pub mod cli;
pub mod error;
pub mod formats;
pub mod model_file;
pub mod woz;

pub use error::{Error, Result};
