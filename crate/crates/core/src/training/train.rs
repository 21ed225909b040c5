use std::time::Instant;

use advreg_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::loss::{combined_loss, LossBreakdown};
use super::scenario::Scenario;
use crate::data::{augment, AugConfig, Dataset, SplitRole};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ForwardOptions, ForwardPass, Group, ModelConfig, TwoHeadNet};
use crate::rng::{substream, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub augmentation: AugConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamHyper::default();
        Self {
            lambda: 0.5,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            scenario: Scenario::Adv,
            augmentation: AugConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return fail(format!(
                "adam betas ({}, {}) must lie in [0, 1) and epsilon {} must be positive",
                self.beta1, self.beta2, self.epsilon
            ));
        }
        if self.batch_size < 2 {
            return fail(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        Ok(())
    }

    /// Augmentation actually applied: the configured pipeline for AUG
    /// scenarios, a center crop of the same size otherwise.
    pub fn effective_augmentation(&self) -> AugConfig {
        if self.scenario.augmented() {
            self.augmentation.clone()
        } else {
            AugConfig::disabled(self.augmentation.crop)
        }
    }
}

/// Per-group Adam state. Groups without state are never updated; the
/// patient group has none outside adversarial scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub hyper: AdamHyper,
    states: [Option<AdamState>; 3],
}

impl Optimizer {
    pub fn for_scenario(net: &TwoHeadNet, scenario: Scenario, hyper: AdamHyper) -> Self {
        let states = Group::ALL.map(|g| {
            (g != Group::Patient || scenario.adversarial()).then(|| AdamState::new(net.params(g)))
        });
        Self { hyper, states }
    }

    pub fn state(&self, group: Group) -> Option<&AdamState> {
        self.states[group as usize].as_ref()
    }

    /// Applies `grads[group]` to every group that carries state.
    pub fn step(&mut self, net: &mut TwoHeadNet, grads: &[Vec<Tensor>; 3]) -> Result<()> {
        for g in Group::ALL {
            if let Some(state) = self.states[g as usize].as_mut() {
                adam_step(net.params_mut(g), &grads[g as usize], state, &self.hyper)?;
            }
        }
        Ok(())
    }

    /// Stores moments as `adam.<group>.{m,v}.<param>` and the step counts
    /// under `extra.adam_steps`.
    pub fn write_into(&self, ckpt: &mut Checkpoint, net: &TwoHeadNet) {
        let mut steps = serde_json::Map::new();
        for g in Group::ALL {
            if let Some(state) = self.state(g) {
                for (p, (m, v)) in net.params(g).iter().zip(state.m.iter().zip(&state.v)) {
                    ckpt.push(format!("adam.{}.m.{}", g.name(), p.name), m.clone());
                    ckpt.push(format!("adam.{}.v.{}", g.name(), p.name), v.clone());
                }
                steps.insert(g.name().into(), state.t.into());
            }
        }
        if !ckpt.meta.extra.is_object() {
            ckpt.meta.extra = serde_json::Value::Object(Default::default());
        }
        ckpt.meta.extra["adam_steps"] = serde_json::Value::Object(steps);
    }
}

/// A preprocessed minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Patient-head indices.
    pub patients: Vec<usize>,
}

/// Augments (or center-crops) the given training samples and looks up
/// their patient-head indices.
pub fn assemble_batch(dataset: &Dataset, indices: &[usize], aug: &AugConfig, rng: &mut StreamRng) -> Result<Batch> {
    let mut images = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    let mut patients = Vec::with_capacity(indices.len());
    for &i in indices {
        let rec = &dataset.manifest.samples[i];
        images.push(augment(&dataset.image(i), aug, rng)?);
        labels.push(usize::from(rec.label));
        let p = dataset.manifest.train_index(rec.patient_id).ok_or_else(|| {
            Error::Contract(format!("sample {} belongs to non-training patient {}", rec.sample_id, rec.patient_id))
        })?;
        patients.push(p);
    }
    Ok(Batch {
        images: Tensor::stack(&images)?,
        labels,
        patients,
    })
}

/// Records the forward pass for `batch` and returns the loss, per-group
/// gradients of the training objective, and the pass itself.
pub fn batch_gradients<R: Rng + ?Sized>(
    net: &TwoHeadNet,
    batch: &Batch,
    scenario: Scenario,
    rng: &mut R,
) -> Result<(LossBreakdown, [Vec<Tensor>; 3], ForwardPass)> {
    let opts = if scenario.adversarial() {
        ForwardOptions::both_heads()
    } else {
        ForwardOptions::task_only()
    };
    if scenario.adversarial() {
        if let Some(&p) = batch.patients.iter().find(|&&p| p >= net.num_patients()) {
            return Err(Error::Contract(format!(
                "patient index {p} outside the patient head's range [0, {})",
                net.num_patients()
            )));
        }
    }
    let mut pass = net.forward(&batch.images, opts, rng)?;
    let patient = pass.patient_logits.map(|id| (id, batch.patients.as_slice()));
    let (nodes, loss) = combined_loss(&mut pass.graph, pass.task_logits, &batch.labels, patient, net.lambda())?;
    let grads = pass.graph.backward(nodes.objective)?;
    let per_group = Group::ALL.map(|g| pass.group_grads(&grads, g));
    Ok((loss, per_group, pass))
}

/// One optimization step on `batch`.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut TwoHeadNet,
    opt: &mut Optimizer,
    batch: &Batch,
    scenario: Scenario,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let (loss, grads, pass) = batch_gradients(net, batch, scenario, rng)?;
    if !loss.l.is_finite() {
        return Err(Error::Contract(format!("loss became non-finite ({})", loss.l)));
    }
    net.update_norm_stats(&pass);
    opt.step(net, &grads)?;
    Ok(loss)
}

/// One pass over the shuffled training split. Shuffling, augmentation and
/// dropout draw from substreams of `(cfg.seed, epoch)`. A trailing batch of
/// a single sample is skipped because batch statistics need two.
pub fn train_epoch(
    net: &mut TwoHeadNet,
    opt: &mut Optimizer,
    dataset: &Dataset,
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<LossBreakdown> {
    let mut order = dataset.indices(SplitRole::Train);
    if order.len() < 2 {
        return Err(Error::Config(format!("training split holds {} images, need at least 2", order.len())));
    }
    if cfg.scenario.adversarial() && net.num_patients() != dataset.num_train_patients() {
        return Err(Error::Contract(format!(
            "patient head has width {} but the dataset has {} training patients",
            net.num_patients(),
            dataset.num_train_patients()
        )));
    }
    order.shuffle(&mut substream(cfg.seed, "shuffle", &[epoch]));
    let aug = cfg.effective_augmentation();
    let (mut lc, mut lp, mut seen) = (0.0, 0.0, 0usize);
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        if chunk.len() < 2 {
            continue;
        }
        let batch = assemble_batch(dataset, chunk, &aug, &mut substream(cfg.seed, "augment", &[epoch, b as u64]))?;
        let mut rng = substream(cfg.seed, "dropout", &[epoch, b as u64]);
        let loss = train_step(net, opt, &batch, cfg.scenario, &mut rng)?;
        lc += loss.lc * chunk.len() as f64;
        lp += loss.lp.unwrap_or(0.0) * chunk.len() as f64;
        seen += chunk.len();
    }
    let n = seen as f64;
    Ok(LossBreakdown::new(
        lc / n,
        cfg.scenario.adversarial().then_some(lp / n),
        cfg.lambda,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub wall_time_s: f64,
}

pub struct TrainOutcome {
    pub net: TwoHeadNet,
    pub optimizer: Optimizer,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// Checkpoint with parameters, running statistics, optimizer moments
    /// and the training configuration.
    pub fn checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        let mut ckpt = Checkpoint::from_net(&self.net);
        ckpt.meta.extra = serde_json::json!({
            "scenario": cfg.scenario.tag(),
            "train": cfg,
        });
        self.optimizer.write_into(&mut ckpt, &self.net);
        ckpt
    }
}

/// Model layout bound to a dataset: input sized to the crop, patient head
/// as wide as the training-patient count, lambda taken from `cfg`.
pub fn bind_model_config(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> ModelConfig {
    ModelConfig {
        input_size: (model.input_size.0, cfg.augmentation.crop.0, cfg.augmentation.crop.1),
        num_patients: dataset.num_train_patients(),
        lambda: cfg.lambda,
        ..model.clone()
    }
}

pub fn train_scenario(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_scenario_with(dataset, model, cfg, |_| Ok(()))
}

/// As [`train_scenario`], calling `on_epoch` after every epoch.
pub fn train_scenario_with(
    dataset: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.augmentation.validate(dataset.image_size())?;
    let mut net = TwoHeadNet::build(bind_model_config(dataset, model, cfg), cfg.seed)?;
    let mut optimizer = Optimizer::for_scenario(&net, cfg.scenario, cfg.adam());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let loss = train_epoch(&mut net, &mut optimizer, dataset, cfg, epoch as u64)?;
        let record = EpochRecord {
            epoch,
            loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record)?;
        history.push(record);
    }
    net.set_mode(crate::model::Mode::Eval);
    Ok(TrainOutcome {
        net,
        optimizer,
        history,
    })
}
