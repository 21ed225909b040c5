use advreg::data::{generate_dataset, AugConfig, Dataset, GeneratorConfig, SplitRole};
use advreg::evaluation::*;
use advreg::model::*;
use advreg::rng::substream;
use advreg::training::*;
use advreg::Error;
use advreg_autodiff::Tensor;
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts { tp, fp, tn, fn_ }
}

/// Predictions and labels realizing the given counts.
fn realize(c: ConfusionCounts) -> (Vec<u8>, Vec<u8>) {
    let mut p = Vec::new();
    let mut y = Vec::new();
    for (n, pred, label) in [(c.tp, 1, 1), (c.fp, 1, 0), (c.tn, 0, 0), (c.fn_, 0, 1)] {
        p.extend(std::iter::repeat_n(pred, n as usize));
        y.extend(std::iter::repeat_n(label, n as usize));
    }
    (p, y)
}

fn logits_for(predictions: &[u8]) -> Tensor {
    let data = predictions
        .iter()
        .flat_map(|&p| if p == 1 { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    Tensor::new(vec![predictions.len(), 2], data).unwrap()
}

#[test]
fn metric_examples() {
    let c = counts(40, 20, 30, 10);
    assert_eq!(c.sensitivity(), Some(0.8));
    assert_eq!(c.specificity(), Some(0.6));
    assert_eq!(c.accuracy(), Some(0.7));

    let (p, y) = realize(c);
    let r = compute_metrics(&logits_for(&p), &y).unwrap();
    assert_eq!(r.counts, c);
    assert_eq!((r.accuracy, r.sensitivity, r.specificity), (Some(0.7), Some(0.8), Some(0.6)));
    assert!(r.undefined.is_empty());
}

#[test]
fn perfect_and_all_positive_predictors() {
    let labels = [0, 1, 1, 0, 1, 0, 0, 1];
    let r = compute_metrics(&logits_for(&labels), &labels).unwrap();
    assert_eq!((r.accuracy, r.sensitivity, r.specificity), (Some(1.0), Some(1.0), Some(1.0)));

    let r = compute_metrics(&logits_for(&[1; 8]), &labels).unwrap();
    assert_eq!((r.accuracy, r.sensitivity, r.specificity), (Some(0.5), Some(1.0), Some(0.0)));
}

#[test]
fn zero_denominators_are_flagged() {
    let r = compute_metrics(&logits_for(&[0, 0, 1]), &[0, 0, 0]).unwrap();
    assert_eq!(r.sensitivity, None);
    assert_eq!(r.undefined, vec!["sensitivity".to_string()]);
    assert_eq!(r.specificity, Some(2.0 / 3.0));
}

#[test]
fn malformed_metric_inputs() {
    assert!(matches!(ConfusionCounts::from_predictions(&[], &[]), Err(Error::Input(_))));
    assert!(matches!(compute_metrics(&logits_for(&[0, 1]), &[0]), Err(Error::Input(_))));
    assert!(matches!(compute_metrics(&logits_for(&[0, 1]), &[0, 2]), Err(Error::Input(_))));
    let three = Tensor::zeros(&[2, 3]);
    assert!(matches!(compute_metrics(&three, &[0, 1]), Err(Error::Input(_))));
}

#[test]
fn ties_go_to_the_negative_class() {
    let logits = Tensor::new(vec![3, 2], vec![0.5, 0.5, -1.0, -1.0, 0.0, 1e-12]).unwrap();
    assert_eq!(argmax_predictions(&logits).unwrap(), vec![0, 0, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_identities(tp in 0u64..60, fp in 0u64..60, tn in 0u64..60, fn_ in 0u64..60) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let c = counts(tp, fp, tn, fn_);
        let (p, y) = realize(c);
        let r = compute_metrics(&logits_for(&p), &y).unwrap();
        prop_assert_eq!(r.counts, c);
        prop_assert_eq!(r.counts.total(), p.len() as u64);
        prop_assert_eq!(r.accuracy, Some((tp + tn) as f64 / (tp + fp + tn + fn_) as f64));
        prop_assert_eq!(r.sensitivity, (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64));
        prop_assert_eq!(r.specificity, (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64));
        prop_assert_eq!(r.sensitivity.is_none(), r.undefined.contains(&"sensitivity".to_string()));
        prop_assert_eq!(r.specificity.is_none(), r.undefined.contains(&"specificity".to_string()));
    }
}

#[test]
fn report_formatter_prints_three_decimals() {
    let column = TableColumn {
        label: "ADV 20".into(),
        accuracy: Some(Summary::point(0.816)),
        sensitivity: Some(Summary::point(0.832)),
        specificity: Some(Summary::point(0.8)),
        probe: None,
    };
    let table = render_table(&[column]);
    assert_eq!(
        table,
        "metric,ADV 20\nAccuracy,0.816\nSensitivity,0.832\nSpecificity,0.800\n"
    );
    let cells: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(cells.join(" / "), "0.816 / 0.832 / 0.800");
}

#[test]
fn summaries_report_sample_spread() {
    let s = Summary::of(&[0.7, 0.8, 0.9]).unwrap();
    assert!((s.mean - 0.8).abs() < 1e-12);
    assert!((s.std.unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(format_cell(Some(&s)), "0.800 (0.100)");
    assert_eq!(Summary::of(&[0.5]).unwrap().std, None);
    assert!(Summary::of(&[]).is_none());
    assert_eq!(format_cell(None), "n/a");
}

/// Standard-normal features with no class information.
fn noise_features(m: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = substream(seed, "noise-features", &[]);
    let n = Normal::new(0.0, 1.0).unwrap();
    Tensor::new(vec![m, d], (0..m * d).map(|_| n.sample(&mut rng)).collect()).unwrap()
}

#[test]
fn probe_on_noise_is_at_chance() {
    let classes = 20;
    let per_class = 250;
    let labels: Vec<usize> = (0..classes * per_class).map(|i| i % classes).collect();
    let cfg = ProbeConfig {
        steps: 150,
        ..ProbeConfig::default()
    };
    let mut total = 0.0;
    let trials = 3;
    for seed in 0..trials {
        let f = noise_features(labels.len(), 8, seed);
        let r = fit_probe(&f, &labels, classes, &ProbeConfig { seed, ..cfg.clone() }, "noise").unwrap();
        assert_eq!(r.chance, 0.05);
        assert_eq!(r.heldout_samples, classes * 50);
        assert!((0.0..=1.0).contains(&r.accuracy));
        total += r.accuracy;
    }
    let mean = total / trials as f64;
    assert!((mean - 0.05).abs() <= 0.03, "noise probe accuracy {mean}");
}

#[test]
fn probe_on_one_hot_identity_is_perfect() {
    let classes = 20;
    let labels: Vec<usize> = (0..classes * 20).map(|i| i % classes).collect();
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        data[i * classes + l] = 1.0;
    }
    let f = Tensor::new(vec![labels.len(), classes], data).unwrap();
    let r = fit_probe(&f, &labels, classes, &ProbeConfig::default(), "one-hot").unwrap();
    assert!(r.accuracy >= 0.99, "one-hot probe accuracy {}", r.accuracy);
}

#[test]
fn probe_argument_errors() {
    let f = Tensor::zeros(&[4, 2]);
    assert!(matches!(fit_probe(&f, &[0; 4], 1, &ProbeConfig::default(), ""), Err(Error::Config(_))));
    assert!(matches!(fit_probe(&f, &[0, 1, 2], 3, &ProbeConfig::default(), ""), Err(Error::Input(_))));
    assert!(matches!(fit_probe(&f, &[0, 1, 5, 0], 3, &ProbeConfig::default(), ""), Err(Error::Input(_))));
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        stem_width: 4,
        stage_widths: vec![4, 8],
        blocks_per_stage: 1,
        ..ModelConfig::default()
    }
}

fn small_dataset(seed: u64) -> Dataset {
    generate_dataset(&GeneratorConfig {
        patients: 6,
        images: 72,
        test_patients: 2,
        test_images: None,
        height: 16,
        width: 16,
        seed,
        confound_strength: 0.8,
    })
    .unwrap()
}

fn small_train(scenario: Scenario, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs: 1,
        seed,
        scenario,
        augmentation: AugConfig {
            crop: (14, 14),
            ..AugConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn small_net(ds: &Dataset) -> TwoHeadNet {
    let cfg = small_train(Scenario::Adv, 0);
    TwoHeadNet::build(bind_model_config(ds, &tiny_model(), &cfg), 3).unwrap()
}

#[test]
fn evaluation_is_deterministic_and_counts_every_test_image() {
    let ds = small_dataset(1);
    let net = small_net(&ds);
    let a = evaluate_model(&net, &ds).unwrap();
    let b = evaluate_model(&net, &ds).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.counts.total() as usize, ds.indices(SplitRole::Test).len());
}

#[test]
fn zeroed_task_head_predicts_no_plaque() {
    let ds = small_dataset(2);
    let mut net = small_net(&ds);
    for p in net.params_mut(Group::Task).iter_mut() {
        p.value = Tensor::zeros(p.value.shape());
    }
    let r = evaluate_model(&net, &ds).unwrap();
    assert!(r.counts.tp + r.counts.fn_ > 0);
    assert_eq!(r.sensitivity, Some(0.0));
    assert_eq!(r.specificity, Some(1.0));
}

#[test]
fn evaluation_refuses_bad_splits() {
    let ds = small_dataset(3);
    let net = small_net(&ds);

    let mut leaked = ds.manifest.clone();
    let test_patient = leaked.patients_with(SplitRole::Test)[0];
    leaked.train_patients.push(test_patient);
    let leaked = Dataset {
        manifest: leaked,
        images: ds.images.clone(),
    };
    assert!(matches!(evaluate_model(&net, &leaked), Err(Error::Contract(_))));

    let mut no_test = ds.manifest.clone();
    for role in no_test.split.values_mut() {
        if *role == SplitRole::Test {
            *role = SplitRole::Unused;
        }
    }
    let no_test = ds.with_manifest(no_test).unwrap();
    assert!(matches!(evaluate_model(&net, &no_test), Err(Error::Config(_))));
}

#[test]
fn patient_probe_needs_two_patients() {
    let ds = small_dataset(4);
    let net = small_net(&ds);
    let mut one = ds.manifest.clone();
    let keep = one.train_patients[0];
    for (p, role) in one.split.iter_mut() {
        if *role == SplitRole::Train && *p != keep {
            *role = SplitRole::Unused;
        }
    }
    one.train_patients = vec![keep];
    let one = ds.with_manifest(one).unwrap();
    assert!(matches!(patient_probe(&net, &one, &ProbeConfig::default()), Err(Error::Config(_))));

    let r = patient_probe(&net, &ds, &ProbeConfig::default()).unwrap();
    assert_eq!(r.num_classes, 4);
    assert_eq!(r.chance, 0.25);
    assert!((0.0..=1.0).contains(&r.accuracy));
}

#[test]
fn matrix_columns_follow_the_default_layout() {
    let cfg = MatrixConfig::default();
    let labels: Vec<String> = cfg
        .columns()
        .iter()
        .map(|(s, r)| match r {
            Regime::Full => s.tag().to_string(),
            Regime::Reduced(n) => format!("{} {n}", s.tag()),
        })
        .collect();
    assert_eq!(labels, ["N", "AUG", "ADV", "AUG+ADV", "AUG 20", "ADV 20", "AUG+ADV 20"]);
    let all = MatrixConfig {
        omit_reduced_baseline: false,
        ..MatrixConfig::default()
    };
    assert_eq!(all.columns().len(), 8);
    assert_eq!("reduced20".parse::<Regime>().unwrap(), Regime::Reduced(20));
    assert_eq!("full".parse::<Regime>().unwrap(), Regime::Full);
    assert!("half".parse::<Regime>().is_err());
}

fn small_matrix(scenarios: Vec<Scenario>, seeds: Vec<u64>, jobs: usize) -> MatrixConfig {
    MatrixConfig {
        scenarios,
        regimes: vec![Regime::Full],
        seeds,
        model: tiny_model(),
        train: small_train(Scenario::N, 0),
        probe: ProbeConfig {
            steps: 20,
            ..ProbeConfig::default()
        },
        jobs,
        ..MatrixConfig::default()
    }
}

#[test]
fn single_cell_matrix_equals_direct_run() {
    let ds = small_dataset(5);
    let cfg = small_matrix(vec![Scenario::Adv], vec![7], 1);
    let report = run_experiment_matrix(&ds, &cfg).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.cells.len(), 1);

    let train = small_train(Scenario::Adv, 7);
    let outcome = train_scenario(&ds, &tiny_model(), &train).unwrap();
    let direct = evaluate_model(&outcome.net, &ds).unwrap();
    let run = &report.runs[0];
    assert_eq!(run.error, None);
    let m = run.metrics.as_ref().unwrap();
    assert_eq!(m.counts, direct.counts);
    assert_eq!(m.accuracy, direct.accuracy);
    assert_eq!(m.seed, Some(7));
    assert_eq!(m.scenario.as_deref(), Some("ADV"));
    assert_eq!(report.cells[0].accuracy.unwrap().mean, direct.accuracy.unwrap());
    assert_eq!(report.cells[0].label, "ADV");
}

#[test]
fn matrix_is_reproducible_across_thread_counts() {
    let ds = small_dataset(6);
    let a = run_experiment_matrix(&ds, &small_matrix(vec![Scenario::N, Scenario::Adv], vec![0, 1], 1)).unwrap();
    let b = run_experiment_matrix(&ds, &small_matrix(vec![Scenario::N, Scenario::Adv], vec![0, 1], 3)).unwrap();
    assert_eq!(a.table(), b.table());
    assert_eq!(a.cells, b.cells);
    let order: Vec<(Scenario, u64)> = a.runs.iter().map(|r| (r.scenario, r.seed)).collect();
    assert_eq!(order, [(Scenario::N, 0), (Scenario::N, 1), (Scenario::Adv, 0), (Scenario::Adv, 1)]);
    assert!(a.table().lines().any(|l| l.starts_with("Patient probe accuracy,")));
}

#[test]
fn failed_cell_does_not_abort_the_matrix() {
    let ds = small_dataset(7);
    let cfg = MatrixConfig {
        regimes: vec![Regime::Full, Regime::Reduced(30)],
        omit_reduced_baseline: false,
        probe_enabled: false,
        ..small_matrix(vec![Scenario::N], vec![0], 1)
    };
    let report = run_experiment_matrix(&ds, &cfg).unwrap();
    let full = report.cell(Scenario::N, Regime::Full).unwrap();
    let reduced = report.cell(Scenario::N, Regime::Reduced(30)).unwrap();
    assert_eq!((full.failed, reduced.failed), (0, 1));
    assert!(reduced.accuracy.is_none());
    assert!(report.runs[1].error.as_deref().unwrap().contains("30"));
    assert!(report.table().contains("n/a"));
}

#[test]
fn matrix_config_errors() {
    let ds = small_dataset(8);
    for cfg in [
        small_matrix(vec![], vec![0], 1),
        small_matrix(vec![Scenario::N], vec![], 1),
    ] {
        assert!(matches!(run_experiment_matrix(&ds, &cfg), Err(Error::Config(_))));
    }
}

#[test]
fn config_digest_is_stable_hex() {
    let a = config_digest(&tiny_model()).unwrap();
    assert_eq!(a.len(), 64);
    assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(a, config_digest(&tiny_model()).unwrap());
    let mut other = tiny_model();
    other.stem_width += 1;
    assert_ne!(a, config_digest(&other).unwrap());
}
