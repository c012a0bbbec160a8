//! Host-side half of the sketch-and-paint pipeline: image files, the dataset
//! manifest, checkpoints, training drivers, response CSVs, the survey
//! server and the `sapgan` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;
pub mod responses;
pub mod server;
pub mod train;

pub use error::{Error, Result};
