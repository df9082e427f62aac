//! Experiment runner for the `mvsde` command.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use mvsde_core::{Error, Result};

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{run, RunOptions};
pub use output::{write_output, ExperimentOutput};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format { .. } => exit::IO,
        e if e.is_numerical() => exit::NUMERICAL,
        _ => exit::CONFIG,
    }
}

/// Runs `experiment` from a config file and writes its outputs to `out`
/// (or the directory named in the config).
pub fn run_to_dir(
    experiment: Experiment,
    config: &ExperimentConfig,
    out: Option<&Path>,
    dump_paths: bool,
) -> Result<(PathBuf, ExperimentOutput)> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.out_dir(experiment));
    let opts = RunOptions { dump_paths, cache_dir: Some(dir.join("cache")) };
    let output = run(experiment, config, &opts)?;
    write_output(&dir, experiment, config, &output)?;
    Ok((dir, output))
}
