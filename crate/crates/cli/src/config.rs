//! Resolved run configuration: defaults, then the TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use advreg::data::GeneratorConfig;
use advreg::evaluation::{MatrixConfig, ProbeConfig, Regime};
use advreg::model::ModelConfig;
use advreg::training::{Scenario, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Training-patient regime for `train` and `eval`.
    pub regime: Regime,
    pub scenarios: Vec<Scenario>,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub omit_reduced_baseline: bool,
    pub probe_enabled: bool,
    pub probe: ProbeConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let m = MatrixConfig::default();
        Self {
            regime: Regime::Full,
            scenarios: m.scenarios,
            regimes: m.regimes,
            seeds: m.seeds,
            omit_reduced_baseline: m.omit_reduced_baseline,
            probe_enabled: m.probe_enabled,
            probe: m.probe,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunMeta {
    pub command: String,
    pub out: Option<PathBuf>,
    /// Dataset directory read by train, eval and matrix.
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// When set, replaces every component seed of the command.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub timestamp_unix: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: GeneratorConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub run: RunMeta,
}

impl RunConfig {
    /// Defaults overlaid with `path`, if any. Unknown keys are rejected so
    /// that typos do not silently fall back to defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(&text);
        let cfg: Self = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()))
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        if !unknown.is_empty() {
            return Err(CliError::config(format!(
                "unknown config keys in {}: {}",
                path.display(),
                unknown.join(", ")
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::config(format!("cannot encode config: {e}")))
    }

    /// Writes the resolved config as `config.toml` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("config.toml");
        fs::write(&path, self.to_toml()?)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn matrix(&self) -> MatrixConfig {
        let e = &self.evaluation;
        MatrixConfig {
            scenarios: e.scenarios.clone(),
            regimes: e.regimes.clone(),
            seeds: e.seeds.clone(),
            omit_reduced_baseline: e.omit_reduced_baseline,
            probe_enabled: e.probe_enabled,
            model: self.model.clone(),
            train: self.training.clone(),
            probe: e.probe.clone(),
            jobs: self.run.jobs.unwrap_or(1),
        }
    }
}

/// `1..5` (inclusive), `3` or `0,2,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid seed list '{s}' (use 1..5, 3 or 0,2,7)");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}
