//! Parallel drivers, file formats, the validation chain and the command line
//! on top of `shgsteer-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;
pub mod validate;

pub use error::CliError;
