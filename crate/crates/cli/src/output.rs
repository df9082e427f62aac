//! Result tables and their files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mvsde_core::numeric::MeanEstimate;
use mvsde_core::simulator::Trajectory;
use mvsde_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Experiment, ExperimentConfig};

/// Floats as 17 significant digits, enough to round-trip.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub param: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Per-replication values; `estimate` and `stderr` are recomputable from these.
    pub raw: Vec<f64>,
}

impl ResultRow {
    pub fn from_raw(param: impl Into<String>, raw: Vec<f64>) -> Self {
        let e = MeanEstimate::from_samples(&raw);
        Self { param: param.into(), estimate: e.mean, stderr: e.stderr, raw }
    }

    pub fn replications(&self) -> usize {
        self.raw.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub rows: Vec<ResultRow>,
}

impl Table {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), rows: Vec::new() }
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }

    pub fn raw_file(&self, row: &ResultRow) -> String {
        format!("raw/{}_{}.csv", self.name, row.param)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,estimate,stderr,replications,raw_file\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.param,
                fmt_float(r.estimate),
                fmt_float(r.stderr),
                r.replications(),
                self.raw_file(r)
            );
        }
        out
    }

    pub fn raw_csv(row: &ResultRow) -> String {
        let mut out = String::from("replication,value\n");
        for (i, v) in row.raw.iter().enumerate() {
            let _ = writeln!(out, "{i},{}", fmt_float(*v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    /// Experiment-specific results embedded in the JSON summary.
    pub summary: Map<String, Value>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per work item; written to its own file.
    pub timings: Vec<(String, f64)>,
    /// Full trajectories, kept only when path dumping is requested.
    pub paths: Vec<(String, Trajectory)>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn paths_csv(t: &Trajectory) -> String {
    let d = t.dim();
    let mut out = String::from("k,t,particle");
    for c in 0..d {
        let _ = write!(out, ",x{c}");
    }
    out.push('\n');
    for (k, cloud) in t.clouds().iter().enumerate() {
        for (i, x) in cloud.states().iter().enumerate() {
            let _ = write!(out, "{k},{},{i}", fmt_float(cloud.time));
            for v in x {
                let _ = write!(out, ",{}", fmt_float(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// The JSON summary: resolved config, version, results and checks.
pub fn summary_json(experiment: Experiment, config: &ExperimentConfig, output: &ExperimentOutput) -> Value {
    let mut resolved = config.clone();
    resolved.experiment = Some(experiment);
    let tables: Vec<Value> =
        output.tables.iter().map(|t| json!({ "name": t.name, "file": format!("{}.csv", t.name) })).collect();
    json!({
        "experiment": experiment.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": resolved,
        "tables": tables,
        "results": output.summary,
        "checks": output.checks,
    })
}

/// Writes tables, raw files, the summary, timings and optional paths under
/// `dir`. Returns the files written.
pub fn write_output(
    dir: &Path,
    experiment: Experiment,
    config: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<Vec<PathBuf>> {
    mkdir(&dir.join("raw"))?;
    let mut written = Vec::new();
    for t in &output.tables {
        let p = dir.join(format!("{}.csv", t.name));
        write(&p, &t.to_csv())?;
        written.push(p);
        for r in &t.rows {
            let p = dir.join(t.raw_file(r));
            write(&p, &Table::raw_csv(r))?;
            written.push(p);
        }
    }
    let summary = serde_json::to_string_pretty(&summary_json(experiment, config, output)).expect("json");
    let p = dir.join("summary.json");
    write(&p, &(summary + "\n"))?;
    written.push(p);

    let mut timings = String::from("item,seconds\n");
    for (item, s) in &output.timings {
        let _ = writeln!(timings, "{item},{s:.6}");
    }
    let p = dir.join("timings.csv");
    write(&p, &timings)?;
    written.push(p);

    if !output.paths.is_empty() {
        mkdir(&dir.join("paths"))?;
        for (name, t) in &output.paths {
            let p = dir.join("paths").join(format!("{name}.csv"));
            write(&p, &paths_csv(t))?;
            written.push(p);
        }
    }
    Ok(written)
}
