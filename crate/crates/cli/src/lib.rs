//! Configuration-driven runs of the `sympflow` solvers with CSV output.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, Outcome, Status};
pub use config::{load, Command, ConfigError, RunConfig};
