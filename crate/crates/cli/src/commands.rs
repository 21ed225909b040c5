use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use advreg::data::{generate_dataset, load_dataset, restrict_train_patients, save_dataset, Dataset, SplitRole};
use advreg::evaluation::{
    config_digest, evaluate_model, patient_probe, run_experiment_matrix_with, MetricsReport, ProbeResult, Regime,
};
use advreg::model::{check_gradients, Checkpoint, ModelConfig, TwoHeadNet};
use advreg::rng::substream;
use advreg::training::{train_scenario_with, TrainConfig};
use advreg::Error;
use advreg_autodiff::{Tensor, DEFAULT_STEP};
use rand::Rng;
use serde::Serialize;

use crate::config::{parse_seeds, RunConfig};
use crate::exit::CliError;
use crate::{Common, EvalArgs, GenDataArgs, GradCheckArgs, MatrixArgs, TrainArgs, TrainingFlags};

type Result<T> = std::result::Result<T, CliError>;

fn resolve(common: &Common, command: &str, stamp: bool) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.run.command = command.to_string();
    if common.seed.is_some() {
        cfg.run.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.run.out = common.out.clone();
    }
    if common.jobs.is_some() {
        cfg.run.jobs = common.jobs;
    }
    cfg.run.timestamp_unix = stamp.then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    Ok(cfg)
}

fn out_dir(cfg: &mut RunConfig, fallback: &str) -> PathBuf {
    cfg.run.out.get_or_insert_with(|| PathBuf::from(fallback)).clone()
}

fn apply_training(t: &mut TrainConfig, f: &TrainingFlags) {
    if let Some(v) = f.scenario {
        t.scenario = v;
    }
    if let Some(v) = f.lambda {
        t.lambda = v;
    }
    if let Some(v) = f.epochs {
        t.epochs = v;
    }
    if let Some(v) = f.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = f.learning_rate {
        t.learning_rate = v;
    }
}

fn data_dir(cfg: &mut RunConfig, flag: &Option<PathBuf>, command: &str) -> Result<PathBuf> {
    if flag.is_some() {
        cfg.run.data_dir = flag.clone();
    }
    cfg.run
        .data_dir
        .clone()
        .ok_or_else(|| CliError::config(format!("{command} needs a dataset: pass --data <dir> or set run.data_dir")))
}

// The resolved config records the generator settings of the dataset actually used.
fn load_data(cfg: &mut RunConfig, dir: &Path) -> Result<Dataset> {
    let ds = load_dataset(dir)?;
    cfg.data = ds.manifest.config.clone();
    Ok(ds)
}

fn with_regime(ds: Dataset, regime: Regime, seed: u64) -> Result<Dataset> {
    match regime {
        Regime::Full => Ok(ds),
        Regime::Reduced(n) => Ok(ds.with_manifest(restrict_train_patients(&ds.manifest, n, seed)?)?),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn gen_data(common: &Common, a: &GenDataArgs) -> Result<()> {
    // No timestamp: the same invocation must reproduce the directory byte for byte.
    let mut cfg = resolve(common, "gen-data", false)?;
    let d = &mut cfg.data;
    for (slot, flag) in [
        (&mut d.patients, a.patients),
        (&mut d.images, a.images),
        (&mut d.test_patients, a.test_patients),
        (&mut d.height, a.height),
        (&mut d.width, a.width),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if a.test_images.is_some() {
        d.test_images = a.test_images;
    }
    if let Some(v) = a.confound {
        d.confound_strength = v;
    }
    if let Some(s) = cfg.run.seed {
        cfg.data.seed = s;
    }
    let out = out_dir(&mut cfg, "data");
    let ds = generate_dataset(&cfg.data)?;
    save_dataset(&ds, &out)?;
    cfg.write_to(&out)?;
    let m = &ds.manifest;
    println!(
        "wrote {}: {} patients, {} images; train {} patients / {} images; test {} patients / {} images",
        out.display(),
        m.patients.len(),
        m.samples.len(),
        m.train_patients.len(),
        ds.indices(SplitRole::Train).len(),
        m.patients_with(SplitRole::Test).len(),
        ds.indices(SplitRole::Test).len()
    );
    Ok(())
}

pub fn train(common: &Common, a: &TrainArgs) -> Result<()> {
    let mut cfg = resolve(common, "train", true)?;
    let dir = data_dir(&mut cfg, &a.data, "train")?;
    if let Some(r) = a.regime {
        cfg.evaluation.regime = r;
    }
    apply_training(&mut cfg.training, &a.training);
    if let Some(s) = cfg.run.seed {
        cfg.training.seed = s;
        cfg.evaluation.probe.seed = s;
    }
    let out = out_dir(&mut cfg, "runs/train");
    let ds = with_regime(load_data(&mut cfg, &dir)?, cfg.evaluation.regime, cfg.training.seed)?;
    cfg.write_to(&out)?;

    let log_path = out.join("epochs.jsonl");
    let mut log = BufWriter::new(
        File::create(&log_path).map_err(|e| CliError::io(format!("cannot create {}: {e}", log_path.display())))?,
    );
    let epochs = cfg.training.epochs;
    let outcome = train_scenario_with(&ds, &cfg.model, &cfg.training, |rec| {
        let line = serde_json::to_string(rec).expect("serializable");
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|source| Error::Io {
                path: log_path.clone(),
                source,
            })?;
        eprintln!("epoch {}/{epochs}: {line}", rec.epoch + 1);
        Ok(())
    })?;

    let mut ckpt = outcome.checkpoint(&cfg.training);
    ckpt.meta.extra["regime"] = serde_json::json!(cfg.evaluation.regime.tag());
    let ckpt_path = out.join("model.ckpt");
    ckpt.save(&ckpt_path)?;
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": ckpt_path,
            "scenario": cfg.training.scenario.tag(),
            "regime": cfg.evaluation.regime.tag(),
            "epochs": epochs,
            "final": outcome.history.last().map(|r| r.loss),
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    checkpoint: PathBuf,
    metrics: MetricsReport,
    probe: Option<ProbeResult>,
}

pub fn eval(common: &Common, a: &EvalArgs) -> Result<()> {
    let mut cfg = resolve(common, "eval", true)?;
    if a.checkpoint.is_some() {
        cfg.run.checkpoint = a.checkpoint.clone();
    }
    if a.no_probe {
        cfg.evaluation.probe_enabled = false;
    }
    let ckpt_path = cfg
        .run
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::config("eval needs --checkpoint <file>"))?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let dir = data_dir(&mut cfg, &a.data, "eval")?;
    let net = ckpt.to_net()?;

    let extra = &ckpt.meta.extra;
    let train: Option<TrainConfig> = extra.get("train").and_then(|v| serde_json::from_value(v.clone()).ok());
    let seed = train.as_ref().map_or(ckpt.meta.seed, |t| t.seed);
    let regime = match extra.get("regime").and_then(|v| v.as_str()) {
        Some(tag) => tag.parse()?,
        None => Regime::Full,
    };
    cfg.evaluation.regime = regime;
    if let Some(s) = cfg.run.seed {
        cfg.evaluation.probe.seed = s;
    }
    let out = out_dir(&mut cfg, "runs/eval");
    let ds = with_regime(load_data(&mut cfg, &dir)?, regime, seed)?;
    cfg.write_to(&out)?;

    let mut metrics = evaluate_model(&net, &ds)?;
    metrics.scenario = extra.get("scenario").and_then(|v| v.as_str()).map(str::to_string);
    metrics.seed = Some(seed);
    metrics.config_digest = Some(config_digest(&ckpt.meta)?);
    let probe = if cfg.evaluation.probe_enabled {
        Some(patient_probe(&net, &ds, &cfg.evaluation.probe)?)
    } else {
        None
    };
    let doc = json(&EvalOutput {
        checkpoint: ckpt_path,
        metrics,
        probe,
    });
    write_file(&out.join("metrics.json"), &doc)?;
    print!("{doc}");
    Ok(())
}

pub fn matrix(common: &Common, a: &MatrixArgs) -> Result<()> {
    let mut cfg = resolve(common, "matrix", true)?;
    let dir = data_dir(&mut cfg, &a.data, "matrix")?;
    apply_training(&mut cfg.training, &a.training);
    let e = &mut cfg.evaluation;
    if let Some(v) = &a.scenarios {
        e.scenarios = v.clone();
    }
    if let Some(v) = &a.regimes {
        e.regimes = v.clone();
    }
    match (&a.seeds, cfg.run.seed) {
        (Some(v), _) => e.seeds = parse_seeds(v).map_err(CliError::config)?,
        (None, Some(s)) => e.seeds = vec![s],
        (None, None) => {}
    }
    if a.all_columns {
        e.omit_reduced_baseline = false;
    }
    if a.no_probe {
        e.probe_enabled = false;
    }
    let out = out_dir(&mut cfg, "runs/matrix");
    let ds = load_data(&mut cfg, &dir)?;
    let matrix = cfg.matrix();
    matrix.validate()?;
    cfg.write_to(&out)?;

    let total = matrix.columns().len() * matrix.seeds.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let report = run_experiment_matrix_with(&ds, &matrix, |r| {
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        let status = match (&r.error, &r.metrics) {
            (Some(err), _) => format!("failed: {err}"),
            (None, Some(m)) => format!("accuracy {}", m.accuracy.map_or("n/a".into(), |v| format!("{v:.3}"))),
            (None, None) => String::new(),
        };
        eprintln!(
            "[{k}/{total}] {} {} seed {}: {status} ({:.1}s)",
            r.scenario, r.regime, r.seed, r.runtime_s
        );
    })?;

    for r in &report.runs {
        let name = format!("{}-{}-seed{}.json", r.scenario.tag().replace('+', "_"), r.regime.tag(), r.seed);
        write_file(&out.join("runs").join(name), json(r))?;
    }
    write_file(&out.join("summary.json"), json(&report.cells))?;
    let table = report.table();
    write_file(&out.join("table.csv"), &table)?;
    print!("{table}");
    let failed: usize = report.cells.iter().map(|c| c.failed).sum();
    if failed > 0 {
        eprintln!("warning: {failed} of {total} runs failed; see {}", out.join("runs").display());
    }
    Ok(())
}

#[derive(Serialize)]
struct GradCheckOutput {
    tolerance: f64,
    max_relative_error: f64,
    runtime_s: f64,
    params: Vec<(String, String, f64)>,
}

pub fn grad_check(common: &Common, a: &GradCheckArgs) -> Result<()> {
    let mut cfg = resolve(common, "grad-check", true)?;
    let seed = cfg.run.seed.unwrap_or(0);
    cfg.model = ModelConfig {
        lambda: cfg.training.lambda,
        ..ModelConfig::grad_check_mini()
    };
    let start = Instant::now();
    let net = TwoHeadNet::build(cfg.model.clone(), seed)?;
    let (c, h, w) = cfg.model.input_size;
    let batch = 4;
    let mut rng = substream(seed, "grad-check-input", &[]);
    let x = Tensor::new(
        vec![batch, c, h, w],
        (0..batch * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("input shape");
    let labels: Vec<usize> = (0..batch).map(|i| (i + 1) / 2 % 2).collect();
    let patients: Vec<usize> = (0..batch).map(|i| i % cfg.model.num_patients).collect();
    let checks = check_gradients(
        &net,
        &x,
        &labels,
        &patients,
        DEFAULT_STEP,
        &mut substream(seed, "grad-check-dropout", &[]),
    )?;
    let runtime_s = start.elapsed().as_secs_f64();

    let worst = checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    for c in &checks {
        println!("{:<8} {:<32} {:.3e}", c.group.name(), c.name, c.max_relative_error);
    }
    let verdict = if worst <= a.tol { "PASS" } else { "FAIL" };
    println!(
        "max relative error {worst:.3e} (tolerance {:.1e}) over {} parameters in {runtime_s:.2}s: {verdict}",
        a.tol,
        checks.len()
    );
    if let Some(out) = cfg.run.out.clone() {
        cfg.write_to(&out)?;
        let doc = GradCheckOutput {
            tolerance: a.tol,
            max_relative_error: worst,
            runtime_s,
            params: checks
                .iter()
                .map(|c| (c.group.name().to_string(), c.name.clone(), c.max_relative_error))
                .collect(),
        };
        write_file(&out.join("grad_check.json"), json(&doc))?;
    }
    if worst > a.tol {
        return Err(CliError::tolerance(format!(
            "max relative error {worst:.3e} exceeds tolerance {:.1e}",
            a.tol
        )));
    }
    Ok(())
}
