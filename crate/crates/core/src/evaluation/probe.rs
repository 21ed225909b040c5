use std::collections::BTreeMap;

use advreg_autodiff::{Graph, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{center_crop, Dataset, SplitRole};
use crate::error::{Error, Result};
use crate::model::{Param, TwoHeadNet};
use crate::rng::substream;
use crate::training::{adam_step, AdamHyper, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Full-batch Adam steps.
    pub steps: usize,
    pub learning_rate: f64,
    /// Fraction of each patient's images held out for scoring.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            learning_rate: 0.05,
            holdout: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub chance: f64,
    pub num_classes: usize,
    pub trained_on: String,
    pub fit_samples: usize,
    pub heldout_samples: usize,
}

/// Fits a linear softmax classifier `labels <- features` on a per-class
/// 80/20 (by default) split and scores it on the held-out part. Features
/// are standardized with statistics of the fitting part.
pub fn fit_probe(
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
    cfg: &ProbeConfig,
    trained_on: &str,
) -> Result<ProbeResult> {
    if num_classes < 2 {
        return Err(Error::Config(format!("a probe needs at least 2 classes, got {num_classes}")));
    }
    let [m, d] = *features.shape() else {
        return Err(Error::Input(format!("expected [M, D] features, got {:?}", features.shape())));
    };
    if m != labels.len() {
        return Err(Error::Input(format!("{m} feature rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Input(format!("probe label {bad} outside [0, {num_classes})")));
    }
    if !(cfg.holdout > 0.0 && cfg.holdout < 1.0) {
        return Err(Error::Config(format!("probe holdout {} outside (0, 1)", cfg.holdout)));
    }

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let (mut fit, mut held) = (Vec::new(), Vec::new());
    for (class, mut rows) in by_class {
        rows.shuffle(&mut substream(cfg.seed, "probe-split", &[class as u64]));
        let n_held = ((rows.len() as f64 * cfg.holdout).round() as usize).clamp(1.min(rows.len() - 1), rows.len() - 1);
        held.extend_from_slice(&rows[..n_held]);
        fit.extend_from_slice(&rows[n_held..]);
    }
    if held.is_empty() || fit.is_empty() {
        return Err(Error::Config("too few samples to hold any out for the probe".into()));
    }
    fit.sort_unstable();
    held.sort_unstable();

    let x = features.data();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for &r in &fit {
        for j in 0..d {
            mean[j] += x[r * d + j] / fit.len() as f64;
        }
    }
    for &r in &fit {
        for j in 0..d {
            var[j] += (x[r * d + j] - mean[j]).powi(2) / fit.len() as f64;
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v.sqrt() + 1e-8)).collect();
    let standardize = |rows: &[usize]| -> Tensor {
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend((0..d).map(|j| (x[r * d + j] - mean[j]) * inv_std[j]));
        }
        Tensor::new(vec![rows.len(), d], out).expect("probe rows")
    };
    let fit_x = standardize(&fit);
    let held_x = standardize(&held);
    let fit_y: Vec<usize> = fit.iter().map(|&r| labels[r]).collect();

    let mut params = vec![
        Param {
            name: "probe.weight".into(),
            value: Tensor::zeros(&[d, num_classes]),
        },
        Param {
            name: "probe.bias".into(),
            value: Tensor::zeros(&[num_classes]),
        },
    ];
    let mut state = AdamState::new(&params);
    let hp = AdamHyper {
        learning_rate: cfg.learning_rate,
        ..AdamHyper::default()
    };
    for _ in 0..cfg.steps {
        let mut g = Graph::new();
        let input = g.leaf(fit_x.clone());
        let w = g.leaf(params[0].value.clone());
        let b = g.leaf(params[1].value.clone());
        let logits = g.dense(input, w, b)?;
        let loss = g.softmax_cross_entropy(logits, fit_y.clone())?;
        let grads = g.backward(loss)?;
        let gw = grads.get_or_zeros(w, &params[0].value);
        let gb = grads.get_or_zeros(b, &params[1].value);
        adam_step(&mut params, &[gw, gb], &mut state, &hp)?;
    }

    let mut g = Graph::new();
    let input = g.leaf(held_x);
    let w = g.leaf(params[0].value.clone());
    let b = g.leaf(params[1].value.clone());
    let logits = g.dense(input, w, b)?;
    let scores = g.value(logits).data();
    let correct = held
        .iter()
        .enumerate()
        .filter(|(k, &r)| {
            let row = &scores[k * num_classes..(k + 1) * num_classes];
            // First maximum wins ties.
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0;
            best == labels[r]
        })
        .count();
    Ok(ProbeResult {
        accuracy: correct as f64 / held.len() as f64,
        chance: 1.0 / num_classes as f64,
        num_classes,
        trained_on: trained_on.into(),
        fit_samples: fit.len(),
        heldout_samples: held.len(),
    })
}

/// Training-split samples and their patient-head indices.
fn train_samples(dataset: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let idx = dataset.indices(SplitRole::Train);
    let labels = idx
        .iter()
        .map(|&i| {
            let pid = dataset.manifest.samples[i].patient_id;
            dataset
                .manifest
                .train_index(pid)
                .ok_or_else(|| Error::Contract(format!("patient {pid} missing from the training index")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((idx, labels))
}

/// Pooled trunk features of the center-cropped training images, computed
/// on a frozen copy of the network in eval mode.
pub fn trunk_features(net: &TwoHeadNet, dataset: &Dataset, indices: &[usize]) -> Result<Tensor> {
    let (_, h, w) = net.config().input_size;
    let mut rows = Vec::new();
    for chunk in indices.chunks(64) {
        let imgs = chunk
            .iter()
            .map(|&i| center_crop(&dataset.image(i), (h, w)))
            .collect::<Result<Vec<_>>>()?;
        let f = net.features(&Tensor::stack(&imgs)?)?;
        rows.extend_from_slice(f.data());
    }
    let width = rows.len() / indices.len().max(1);
    Ok(Tensor::new(vec![indices.len(), width], rows)?)
}

/// Raw pixels, average-pooled over `pool x pool` blocks.
pub fn pixel_features(dataset: &Dataset, indices: &[usize], pool: usize) -> Result<Tensor> {
    let (h, w) = dataset.image_size();
    if pool == 0 || h % pool != 0 || w % pool != 0 {
        return Err(Error::Config(format!("pool {pool} does not tile a {h}x{w} image")));
    }
    let (ph, pw) = (h / pool, w / pool);
    let mut rows = Vec::with_capacity(indices.len() * ph * pw);
    let scale = 1.0 / (pool * pool) as f64;
    for &i in indices {
        let px = &dataset.images[i * h * w..(i + 1) * h * w];
        for by in 0..ph {
            for bx in 0..pw {
                let mut acc = 0.0;
                for y in by * pool..(by + 1) * pool {
                    for x in bx * pool..(bx + 1) * pool {
                        acc += f64::from(px[y * w + x]);
                    }
                }
                rows.push(acc * scale);
            }
        }
    }
    Ok(Tensor::new(vec![indices.len(), ph * pw], rows)?)
}

/// Patient-identity probe on frozen trunk features of the training split.
pub fn patient_probe(net: &TwoHeadNet, dataset: &Dataset, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let n = dataset.num_train_patients();
    if n < 2 {
        return Err(Error::Config(format!("patient probe needs at least 2 training patients, got {n}")));
    }
    let (idx, labels) = train_samples(dataset)?;
    let features = trunk_features(net, dataset, &idx)?;
    fit_probe(&features, &labels, n, cfg, "frozen trunk features after global pooling")
}

/// Patient-identity probe on pooled raw pixels of the training split.
pub fn pixel_probe(dataset: &Dataset, pool: usize, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let n = dataset.num_train_patients();
    if n < 2 {
        return Err(Error::Config(format!("patient probe needs at least 2 training patients, got {n}")));
    }
    let (idx, labels) = train_samples(dataset)?;
    let features = pixel_features(dataset, &idx, pool)?;
    fit_probe(&features, &labels, n, cfg, &format!("raw pixels, {pool}x{pool} average pooled"))
}
