//! Run configuration read from TOML.
//!
//! A run file names the case, scenario and flavour. `[hyperparameters]`
//! overrides individual fields of the flavour's preset and `[solver]`
//! overrides fields of the solver defaults at `tolerance`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use swingnet::datasets::Scenario;
use swingnet::solver::SolverConfig;
use swingnet::training::{Flavour, Hyperparameters};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default = "default_case")]
    pub case: String,
    pub scenario: String,
    pub flavour: Flavour,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_data")]
    pub data_dir: PathBuf,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub hyperparameters: toml::Table,
    #[serde(default)]
    pub solver: toml::Table,
}

fn default_case() -> String {
    "kundur11".into()
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output() -> PathBuf {
    "runs".into()
}
fn default_data() -> PathBuf {
    "data".into()
}
fn default_tolerance() -> f64 {
    1e-10
}

/// Fully resolved run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub case: String,
    pub scenario: Scenario,
    pub flavour: Flavour,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub hyperparameters: Hyperparameters,
    pub solver: SolverConfig,
}

/// Deserialises `base` with the keys of `over` replaced.
fn overlay<T>(base: &T, over: &toml::Table, what: &str) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut table = toml::Table::try_from(base).context("serialising defaults")?;
    for (k, v) in over {
        if !table.contains_key(k) {
            bail!("unknown {what} field '{k}'");
        }
        table.insert(k.clone(), v.clone());
    }
    table
        .try_into()
        .with_context(|| format!("invalid {what} settings"))
}

impl RunFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Resolves presets and paths; relative paths are taken from `root`.
    pub fn resolve(&self, root: &Path) -> Result<RunConfig> {
        let scenario: Scenario = self.scenario.parse()?;
        if scenario == Scenario::Test {
            bail!("the test grid is not a training scenario");
        }
        if !(self.tolerance > 0.0) {
            bail!("tolerance must be positive");
        }
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        let hyper = overlay(
            &Hyperparameters::preset(self.flavour, scenario),
            &self.hyperparameters,
            "hyperparameter",
        )?;
        hyper.validate(self.flavour)?;
        let solver = overlay(
            &SolverConfig::with_tolerance(self.tolerance),
            &self.solver,
            "solver",
        )?;
        solver.validate()?;
        Ok(RunConfig {
            case: resolve_case(&self.case, root),
            scenario,
            flavour: self.flavour,
            seeds: self.seeds.clone(),
            output_dir: root.join(&self.output_dir),
            data_dir: root.join(&self.data_dir),
            hyperparameters: hyper,
            solver,
        })
    }
}

/// Bundled case names pass through; anything else is a path under `root`.
pub fn resolve_case(case: &str, root: &Path) -> String {
    match case {
        "kundur11" | "ieee39" => case.to_string(),
        path => root.join(path).to_string_lossy().into_owned(),
    }
}
