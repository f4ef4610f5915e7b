//! Batch front end: bound tables, Monte Carlo verification, root-lemma
//! certification and epsilon sweeps, all as CSV with optional SVG.

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{run, CliError, CommandOutput};
pub use config::{KeyValues, RunConfig};
