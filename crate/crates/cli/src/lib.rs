//! Command-line orchestration for the `rwre` library: configuration,
//! subcommands, artifacts and the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
