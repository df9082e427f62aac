//! Experiment configuration files (TOML).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mvsde_core::paths::{InitialLaw, Params, TimeGrid};
use mvsde_core::picard::DEFAULT_M_LAW;
use mvsde_core::{catalog_kernel, Error, KernelPair, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Chaos,
    EulerRate,
    Picard,
    Moments,
    Increments,
    CenteredStats,
    ValidateKernel,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Chaos,
        Experiment::EulerRate,
        Experiment::Picard,
        Experiment::Moments,
        Experiment::Increments,
        Experiment::CenteredStats,
        Experiment::ValidateKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Chaos => "chaos",
            Experiment::EulerRate => "euler-rate",
            Experiment::Picard => "picard",
            Experiment::Moments => "moments",
            Experiment::Increments => "increments",
            Experiment::CenteredStats => "centered-stats",
            Experiment::ValidateKernel => "validate-kernel",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// A scalar or list parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    List(Vec<f64>),
}

/// `name` plus free-form numeric parameters, checked by the catalogs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSpec {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, ParamValue>,
}

impl NamedSpec {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), ParamValue::Scalar(*v))).collect(),
        }
    }

    pub fn params(&self) -> Params {
        self.params
            .iter()
            .map(|(k, v)| {
                let list = match v {
                    ParamValue::Scalar(x) => vec![*x],
                    ParamValue::List(xs) => xs.clone(),
                };
                (k.clone(), list)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSettings {
    #[serde(rename = "M_law", default = "default_m_law")]
    pub m_law: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self { m_law: DEFAULT_M_LAW, tol: default_tol(), max_iter: default_max_iter() }
    }
}

fn default_m_law() -> usize {
    DEFAULT_M_LAW
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    30
}
fn default_replications() -> usize {
    32
}
fn default_dim() -> usize {
    1
}
fn default_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
}

/// Where limit-particle experiments take their law flow from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawSource {
    /// Closed-form flow; scalar linear kernel with a Gaussian or point-mass start only.
    Analytic,
    /// Picard iteration with the `[picard]` settings.
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h_fine: f64,
    #[serde(rename = "N_list", default)]
    pub n_list: Vec<usize>,
    /// Coarse steps (euler-rate, moments) or increment lags (increments).
    #[serde(default)]
    pub h_list: Vec<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Sample pairs for validate-kernel.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law_source: Option<LawSource>,
    pub kernel: NamedSpec,
    pub initial_law: NamedSpec,
    #[serde(default)]
    pub picard: PicardSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSettings>,
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        toml::from_str(&text).map_err(|e| cfg(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kernel(&self) -> Result<KernelPair> {
        catalog_kernel(&self.kernel.name, &self.kernel.params(), self.dim)
    }

    pub fn initial_law(&self) -> Result<InitialLaw> {
        InitialLaw::from_name(&self.initial_law.name, &self.initial_law.params(), self.dim)
    }

    pub fn fine_grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.horizon, self.h_fine).map_err(|e| cfg(format!("h_fine: {e}")))
    }

    /// Grids of `h_list`, each nested in the fine grid.
    pub fn coarse_grids(&self) -> Result<Vec<TimeGrid>> {
        let fine = self.fine_grid()?;
        self.h_list
            .iter()
            .map(|&h| {
                let g = TimeGrid::with_step(self.horizon, h)
                    .map_err(|_| cfg(format!("h = {h} does not divide T = {}", self.horizon)))?;
                fine.stride_to(&g)
                    .map_err(|_| cfg(format!("h = {h} is not an integer multiple of h_fine = {}", self.h_fine)))?;
                Ok(g)
            })
            .collect()
    }

    /// Lags of `h_list` as multiples of `h_fine`.
    pub fn lag_strides(&self) -> Result<Vec<usize>> {
        let fine = self.fine_grid()?;
        Ok(self.coarse_grids()?.iter().map(|g| fine.steps() / g.steps()).collect())
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(cfg(format!("config is for `{e}` but `{experiment}` was requested")));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(cfg("T must be positive"));
        }
        if !(self.h_fine > 0.0) {
            return Err(cfg("h_fine must be positive"));
        }
        if self.dim == 0 {
            return Err(cfg("dim must be at least 1"));
        }
        if self.replications == 0 {
            return Err(cfg("replications must be at least 1"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg("N_list must be strictly increasing"));
        }
        if self.n_list.first() == Some(&0) {
            return Err(cfg("N_list entries must be positive"));
        }
        self.fine_grid()?;
        self.coarse_grids()?;
        self.kernel()?;
        self.initial_law()?;
        let needs_n = !matches!(experiment, Experiment::Picard | Experiment::ValidateKernel);
        if needs_n && self.n_list.is_empty() {
            return Err(cfg(format!("{experiment} needs a nonempty N_list")));
        }
        let needs_h = matches!(experiment, Experiment::EulerRate | Experiment::Increments);
        if needs_h && self.h_list.is_empty() {
            return Err(cfg(format!("{experiment} needs a nonempty h_list")));
        }
        if experiment == Experiment::CenteredStats && self.n_list.iter().any(|&n| n < 3) {
            return Err(cfg("centered-stats needs N >= 3"));
        }
        if self.picard.m_law == 0 || !(self.picard.tol > 0.0) || self.picard.max_iter == 0 {
            return Err(cfg("picard settings need M_law >= 1, tol > 0, max_iter >= 1"));
        }
        if experiment == Experiment::ValidateKernel && self.samples == 0 {
            return Err(cfg("samples must be at least 1"));
        }
        Ok(())
    }

    pub fn out_dir(&self, experiment: Experiment) -> PathBuf {
        self.output.as_ref().map(|o| o.dir.clone()).unwrap_or_else(|| PathBuf::from("results").join(experiment.name()))
    }
}
