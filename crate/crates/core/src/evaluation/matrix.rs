use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::evaluate::evaluate_model;
use super::metrics::MetricsReport;
use super::probe::{patient_probe, ProbeConfig, ProbeResult};
use super::report::{config_digest, render_table, Summary, TableColumn};
use crate::data::{restrict_train_patients, Dataset, GeneratorConfig};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{train_scenario, LossBreakdown, Scenario, TrainConfig};

/// Training-patient regime of a matrix column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regime {
    Full,
    /// Keep only this many training patients.
    Reduced(usize),
}

impl Regime {
    pub fn tag(self) -> String {
        match self {
            Regime::Full => "full".into(),
            Regime::Reduced(n) => format!("reduced{n}"),
        }
    }

    /// Column label suffix: "" for full, " 20" for twenty patients.
    fn suffix(self) -> String {
        match self {
            Regime::Full => String::new(),
            Regime::Reduced(n) => format!(" {n}"),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "full" {
            return Ok(Regime::Full);
        }
        t.strip_prefix("reduced")
            .unwrap_or(&t)
            .parse::<usize>()
            .map(Regime::Reduced)
            .map_err(|_| Error::Config(format!("unknown regime '{s}' (valid: full, reduced<N>, <N>)")))
    }
}

impl Serialize for Regime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub scenarios: Vec<Scenario>,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    /// Drop the N column of reduced regimes.
    pub omit_reduced_baseline: bool,
    /// Run the patient probe after every training run.
    pub probe_enabled: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    /// Worker threads; results do not depend on this.
    pub jobs: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            regimes: vec![Regime::Full, Regime::Reduced(20)],
            seeds: (0..5).collect(),
            omit_reduced_baseline: true,
            probe_enabled: true,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            jobs: 1,
        }
    }
}

impl MatrixConfig {
    /// (scenario, regime) columns in output order: regimes outermost.
    pub fn columns(&self) -> Vec<(Scenario, Regime)> {
        let mut out = Vec::new();
        for &r in &self.regimes {
            for &s in &self.scenarios {
                if self.omit_reduced_baseline && s == Scenario::N && r != Regime::Full {
                    continue;
                }
                if !out.contains(&(s, r)) {
                    out.push((s, r));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("matrix needs at least one scenario".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("matrix needs at least one regime".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("matrix needs at least one seed".into()));
        }
        if self.columns().is_empty() {
            return Err(Error::Config("scenario and regime selection leaves no columns".into()));
        }
        self.train.validate()
    }
}

/// Outcome of one (scenario, regime, seed) run. A failed run carries the
/// error text and no metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: Scenario,
    pub regime: Regime,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub probe: Option<ProbeResult>,
    pub final_loss: Option<LossBreakdown>,
    pub config_digest: String,
    pub runtime_s: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub regime: Regime,
    pub label: String,
    pub runs: usize,
    pub failed: usize,
    pub accuracy: Option<Summary>,
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
    pub probe_accuracy: Option<Summary>,
}

impl CellSummary {
    fn column(&self) -> TableColumn {
        TableColumn {
            label: self.label.clone(),
            accuracy: self.accuracy,
            sensitivity: self.sensitivity,
            specificity: self.specificity,
            probe: self.probe_accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub runs: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
}

impl MatrixReport {
    /// Comma-separated metric table, one column per cell.
    pub fn table(&self) -> String {
        render_table(&self.cells.iter().map(CellSummary::column).collect::<Vec<_>>())
    }

    pub fn cell(&self, scenario: Scenario, regime: Regime) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.scenario == scenario && c.regime == regime)
    }
}

#[derive(Serialize)]
struct DigestInput<'a> {
    data: &'a GeneratorConfig,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    probe: Option<&'a ProbeConfig>,
    regime: Regime,
}

/// Trains, evaluates and (optionally) probes a single run.
pub fn run_single(
    dataset: &Dataset,
    model: &ModelConfig,
    train: &TrainConfig,
    probe: Option<&ProbeConfig>,
    regime: Regime,
) -> Result<(MetricsReport, Option<ProbeResult>, Option<LossBreakdown>, String)> {
    let digest = config_digest(&DigestInput {
        data: &dataset.manifest.config,
        model,
        train,
        probe,
        regime,
    })?;
    let data = match regime {
        Regime::Full => dataset.clone(),
        Regime::Reduced(n) => dataset.with_manifest(restrict_train_patients(&dataset.manifest, n, train.seed)?)?,
    };
    let outcome = train_scenario(&data, model, train)?;
    let mut metrics = evaluate_model(&outcome.net, &data)?;
    metrics.scenario = Some(train.scenario.tag().into());
    metrics.seed = Some(train.seed);
    metrics.config_digest = Some(digest.clone());
    let probe = match probe {
        Some(p) => {
            let cfg = ProbeConfig { seed: train.seed, ..p.clone() };
            Some(patient_probe(&outcome.net, &data, &cfg)?)
        }
        None => None,
    };
    let last = outcome.history.last().map(|r| r.loss);
    Ok((metrics, probe, last, digest))
}

/// Runs every (column, seed) pair and aggregates per column. Runs execute
/// on `cfg.jobs` threads; the report is ordered by column then seed and
/// does not depend on the thread count apart from `runtime_s`.
pub fn run_experiment_matrix(dataset: &Dataset, cfg: &MatrixConfig) -> Result<MatrixReport> {
    run_experiment_matrix_with(dataset, cfg, |_| {})
}

pub fn run_experiment_matrix_with<F>(dataset: &Dataset, cfg: &MatrixConfig, on_run: F) -> Result<MatrixReport>
where
    F: Fn(&RunResult) + Sync,
{
    cfg.validate()?;
    let columns = cfg.columns();
    let tasks: Vec<(Scenario, Regime, u64)> = columns
        .iter()
        .flat_map(|&(s, r)| cfg.seeds.iter().map(move |&seed| (s, r, seed)))
        .collect();
    let results: Mutex<Vec<Option<RunResult>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(scenario, regime, seed)) = tasks.get(i) else { break };
        let train = TrainConfig {
            scenario,
            seed,
            ..cfg.train.clone()
        };
        let start = Instant::now();
        let outcome = run_single(dataset, &cfg.model, &train, cfg.probe_enabled.then_some(&cfg.probe), regime);
        let runtime_s = start.elapsed().as_secs_f64();
        let result = match outcome {
            Ok((metrics, probe, final_loss, digest)) => RunResult {
                scenario,
                regime,
                seed,
                metrics: Some(metrics),
                probe,
                final_loss,
                config_digest: digest,
                runtime_s,
                error: None,
            },
            Err(e) => RunResult {
                scenario,
                regime,
                seed,
                metrics: None,
                probe: None,
                final_loss: None,
                config_digest: String::new(),
                runtime_s,
                error: Some(e.to_string()),
            },
        };
        on_run(&result);
        results.lock().expect("matrix results lock")[i] = Some(result);
    };
    let jobs = cfg.jobs.clamp(1, tasks.len());
    std::thread::scope(|scope| {
        for _ in 1..jobs {
            scope.spawn(worker);
        }
        worker();
    });
    let runs: Vec<RunResult> = results
        .into_inner()
        .expect("matrix results lock")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect();

    let cells = columns
        .iter()
        .map(|&(scenario, regime)| {
            let group: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.scenario == scenario && r.regime == regime)
                .collect();
            let ok: Vec<&MetricsReport> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let collect = |f: fn(&MetricsReport) -> Option<f64>| {
                Summary::of(&ok.iter().filter_map(|m| f(m)).collect::<Vec<_>>())
            };
            let probes: Vec<f64> = group.iter().filter_map(|r| r.probe.as_ref().map(|p| p.accuracy)).collect();
            CellSummary {
                scenario,
                regime,
                label: format!("{}{}", scenario.tag(), regime.suffix()),
                runs: group.len(),
                failed: group.len() - ok.len(),
                accuracy: collect(|m| m.accuracy),
                sensitivity: collect(|m| m.sensitivity),
                specificity: collect(|m| m.specificity),
                probe_accuracy: Summary::of(&probes),
            }
        })
        .collect();
    Ok(MatrixReport { runs, cells })
}
