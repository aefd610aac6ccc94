//! File formats, experiment harness and command line for collective matrix
//! completion. The numerical core lives in `cmc_core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;

pub use error::{Error, Result};
