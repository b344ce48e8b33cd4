//! Library side of the `grhd` binary: run configuration, the checkpoint
//! container, corpus loading and the subcommand bodies.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod gradcheck;

pub use error::CliError;
