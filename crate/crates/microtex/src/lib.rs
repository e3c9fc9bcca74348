//! File formats, dataset IO and the parallel pipeline behind the `microtex`
//! command line.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod pipeline;
pub mod weights;

pub use error::{CliError, Result};
