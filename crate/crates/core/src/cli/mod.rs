//! The `odrec` command line: run configuration, checkpoints, reports and
//! the subcommands tying the library together.

mod checkpoint;
mod commands;
mod config;
mod pipeline;
mod report;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use commands::{run, Cli, Command};
pub use config::{hash_json, DataConfig, RunConfig};
pub use pipeline::{prepare, train_model, Prepared, Trained};
pub use report::Report;
