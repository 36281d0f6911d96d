//! Command-line front end: scenario loading and validation, the analysis
//! subcommands, artifact serialization, and the `verify` invariant suite.

pub mod artifacts;
pub mod commands;
pub mod error;
pub mod scenario;
pub mod verify;
