use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mvsde_cli::{exit, exit_code, run_to_dir, Experiment, ExperimentConfig};

/// Particle simulation experiments for McKean-Vlasov SDEs.
#[derive(Debug, Parser)]
#[command(name = "mvsde", version)]
struct Cli {
    /// chaos, euler-rate, picard, moments, increments, centered-stats or validate-kernel
    experiment: Experiment,

    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, env = "MVSDE_THREADS")]
    threads: Option<usize>,

    /// Output directory; defaults to the config's `output.dir` or `results/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Exit with status 4 if any acceptance check fails.
    #[arg(long)]
    check: bool,

    /// Also write one replication's full particle paths.
    #[arg(long)]
    dump_paths: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    let result = pool.install(|| run_to_dir(cli.experiment, &config, cli.out.as_deref(), cli.dump_paths));
    match result {
        Ok((dir, output)) => {
            for c in &output.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", dir.display());
            if cli.check && !output.all_passed() {
                ExitCode::from(exit::CHECK_FAILED as u8)
            } else {
                ExitCode::from(exit::OK as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
