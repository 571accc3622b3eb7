//! Experiment driver around `flock-core`: configuration profiles, JSONL
//! trajectory and dataset files, expert-data generation, training and
//! simulation runners, evaluation reports, and the point-vs-quadrotor
//! comparison harness. The `flockforge` binary exposes these as subcommands.

pub mod config;
pub mod error;
pub mod files;
pub mod manifest;
pub mod pipeline;
pub mod run;

pub use config::Config;
pub use error::{exit_code, ForgeError};

pub type Result<T> = std::result::Result<T, ForgeError>;
