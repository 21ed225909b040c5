use advreg_autodiff::{AutodiffError, GradMap, Graph, NodeId, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{BranchPoint, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Parameter groups: shared trunk, task head, patient head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Trunk,
    Task,
    Patient,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Trunk, Group::Task, Group::Patient];

    pub fn name(self) -> &'static str {
        match self {
            Group::Trunk => "trunk",
            Group::Task => "task",
            Group::Patient => "patient",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Running statistics of one normalization layer. Its scale and shift are
/// trunk parameters named `<name>.scale` / `<name>.shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub name: String,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Parameter nodes of a post-norm residual block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub conv1: (NodeId, NodeId),
    pub norm1: NormParams,
    pub conv2: (NodeId, NodeId),
    pub projection: Option<(NodeId, NodeId)>,
    pub norm2: NormParams,
}

#[derive(Clone, Debug)]
pub struct NormParams {
    pub scale: NodeId,
    pub shift: NodeId,
    /// Fixed (mean, var) for eval mode; `None` uses batch statistics.
    pub running: Option<(Vec<f64>, Vec<f64>)>,
    pub eps: f64,
}

fn apply_norm(g: &mut Graph, x: NodeId, p: &NormParams) -> Result<NodeId> {
    Ok(match &p.running {
        None => g.batch_norm(x, p.scale, p.shift, p.eps)?,
        Some((mean, var)) => g.normalize(x, p.scale, p.shift, mean.clone(), var.clone(), p.eps)?,
    })
}

/// `relu(norm(shortcut(x) + conv2(relu(norm(conv1(x))))))`, normalization
/// after the residual addition. Returns the block output and its two
/// normalization nodes.
pub fn residual_block(g: &mut Graph, x: NodeId, p: &BlockParams, stride: usize) -> Result<(NodeId, [NodeId; 2])> {
    if stride != 1 && stride != 2 {
        return Err(Error::Config(format!("block stride must be 1 or 2, got {stride}")));
    }
    let in_ch = g.value(x).shape()[1];
    let out_ch = g.value(p.conv1.0).shape()[0];
    if p.projection.is_none() && (stride != 1 || in_ch != out_ch) {
        return Err(Error::Config(format!(
            "block with stride {stride} and {in_ch}->{out_ch} channels needs a projection shortcut"
        )));
    }
    let h = g.conv2d(x, p.conv1.0, p.conv1.1, stride)?;
    let n1 = apply_norm(g, h, &p.norm1)?;
    let h = g.relu(n1)?;
    let h = g.conv2d(h, p.conv2.0, p.conv2.1, 1)?;
    let shortcut = match p.projection {
        Some((w, b)) => g.conv2d(x, w, b, stride)?,
        None => x,
    };
    let sum = g.add(shortcut, h)?;
    let n2 = apply_norm(g, sum, &p.norm2)?;
    Ok((g.relu(n2)?, [n1, n2]))
}

/// Inverted-dropout mask: each entry is `1/keep` with probability `keep`,
/// else 0.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, keep: f64, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

pub fn dropout<R: Rng + ?Sized>(x: &Tensor, keep: f64, mode: Mode, rng: &mut R) -> Result<Tensor> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::Config(format!("dropout keep probability {keep} outside (0, 1]")));
    }
    if mode == Mode::Eval {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), keep, rng);
    let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    Ok(Tensor::new(x.shape().to_vec(), data)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    pub patient_head: bool,
    /// When false the patient path is attached without gradient reversal.
    /// Only meant for diagnostics.
    pub reverse_gradient: bool,
}

impl ForwardOptions {
    pub fn task_only() -> Self {
        Self {
            patient_head: false,
            reverse_gradient: true,
        }
    }

    pub fn both_heads() -> Self {
        Self {
            patient_head: true,
            reverse_gradient: true,
        }
    }
}

/// A recorded forward pass, ready for loss construction and backward.
pub struct ForwardPass {
    pub graph: Graph,
    pub input: NodeId,
    pub features: NodeId,
    pub task_logits: NodeId,
    pub patient_logits: Option<NodeId>,
    param_nodes: [Vec<NodeId>; 3],
    norm_nodes: Vec<NodeId>,
}

impl ForwardPass {
    pub fn param_nodes(&self, group: Group) -> &[NodeId] {
        &self.param_nodes[group.index()]
    }

    /// Gradients for every parameter of `group`, zeros where the loss does
    /// not depend on a parameter.
    pub fn group_grads(&self, grads: &GradMap, group: Group) -> Vec<Tensor> {
        self.param_nodes(group)
            .iter()
            .map(|&id| grads.get_or_zeros(id, self.graph.value(id)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoHeadNet {
    config: ModelConfig,
    seed: u64,
    mode: Mode,
    groups: [Vec<Param>; 3],
    norms: Vec<NormLayer>,
}

struct Init {
    rng: crate::rng::StreamRng,
    groups: [Vec<Param>; 3],
    norms: Vec<NormLayer>,
}

impl Init {
    fn normal(&mut self, group: Group, name: String, shape: &[usize], std: f64) {
        let dist = Normal::new(0.0, std).expect("valid std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.push(group, name, Tensor::new(shape.to_vec(), data).expect("shape"));
    }

    fn push(&mut self, group: Group, name: String, value: Tensor) {
        self.groups[group.index()].push(Param { name, value });
    }

    fn conv(&mut self, name: &str, in_ch: usize, out_ch: usize, k: usize) {
        let std = (2.0 / (in_ch * k * k) as f64).sqrt();
        self.normal(Group::Trunk, format!("{name}.weight"), &[out_ch, in_ch, k, k], std);
        self.push(Group::Trunk, format!("{name}.bias"), Tensor::zeros(&[out_ch]));
    }

    fn norm(&mut self, name: &str, ch: usize) {
        self.push(Group::Trunk, format!("{name}.scale"), Tensor::ones(&[ch]));
        self.push(Group::Trunk, format!("{name}.shift"), Tensor::zeros(&[ch]));
        self.norms.push(NormLayer {
            name: name.to_string(),
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
        });
    }

    fn dense(&mut self, group: Group, name: &str, d: usize, k: usize) {
        let std = (1.0 / d as f64).sqrt();
        self.normal(group, format!("{name}.weight"), &[d, k], std);
        self.push(group, format!("{name}.bias"), Tensor::zeros(&[k]));
    }
}

fn block_name(stage: usize, block: usize) -> String {
    format!("trunk.s{stage}.b{block}")
}

fn needs_projection(stride: usize, in_ch: usize, out_ch: usize) -> bool {
    stride != 1 || in_ch != out_ch
}

/// (stage, block, stride, in_ch, out_ch) for every residual block.
fn block_plan(config: &ModelConfig) -> Vec<(usize, usize, usize, usize, usize)> {
    let mut plan = Vec::new();
    let mut in_ch = config.stem_width;
    for (s, &width) in config.stage_widths.iter().enumerate() {
        for b in 0..config.blocks_per_stage {
            let stride = if b == 0 { 2 } else { 1 };
            plan.push((s, b, stride, in_ch, width));
            in_ch = width;
        }
    }
    plan
}

impl TwoHeadNet {
    /// Builds a network with seeded He-style initialization.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init {
            rng: substream(seed, "init", &[]),
            groups: Default::default(),
            norms: Vec::new(),
        };
        init.conv("trunk.stem.conv", config.input_size.0, config.stem_width, 3);
        init.norm("trunk.stem.norm", config.stem_width);
        for (s, b, stride, in_ch, out_ch) in block_plan(&config) {
            let name = block_name(s, b);
            init.conv(&format!("{name}.conv1"), in_ch, out_ch, 3);
            init.norm(&format!("{name}.norm1"), out_ch);
            init.conv(&format!("{name}.conv2"), out_ch, out_ch, 3);
            if needs_projection(stride, in_ch, out_ch) {
                init.conv(&format!("{name}.proj"), in_ch, out_ch, 1);
            }
            init.norm(&format!("{name}.norm2"), out_ch);
        }
        init.dense(Group::Task, "task.dense", config.feature_width(), 2);
        init.dense(Group::Patient, "patient.dense", config.patient_input_width(), config.num_patients);
        Ok(Self {
            config,
            seed,
            mode: Mode::Train,
            groups: init.groups,
            norms: init.norms,
        })
    }

    /// Reassembles a network from stored parts, checking every tensor
    /// against a freshly planned layout.
    pub fn from_parts(
        config: ModelConfig,
        seed: u64,
        mode: Mode,
        groups: [Vec<Param>; 3],
        norms: Vec<NormLayer>,
    ) -> Result<Self> {
        let template = Self::build(config.clone(), seed)?;
        for g in Group::ALL {
            let (want, got) = (template.params(g), &groups[g.index()]);
            let same = want.len() == got.len()
                && want
                    .iter()
                    .zip(got)
                    .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
            if !same {
                return Err(Error::Contract(format!("{} parameters do not match the configuration", g.name())));
            }
        }
        let norms_ok = template.norms.len() == norms.len()
            && template.norms.iter().zip(&norms).all(|(a, b)| {
                a.name == b.name
                    && a.running_mean.len() == b.running_mean.len()
                    && a.running_var.len() == b.running_var.len()
                    && b.running_var.iter().all(|&v| v > 0.0)
            });
        if !norms_ok {
            return Err(Error::Contract("normalization statistics do not match the configuration".into()));
        }
        Ok(Self {
            config,
            seed,
            mode,
            groups,
            norms,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    pub fn num_patients(&self) -> usize {
        self.config.num_patients
    }

    pub fn params(&self, group: Group) -> &[Param] {
        &self.groups[group.index()]
    }

    pub fn params_mut(&mut self, group: Group) -> &mut [Param] {
        &mut self.groups[group.index()]
    }

    pub fn norms(&self) -> &[NormLayer] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [NormLayer] {
        &mut self.norms
    }

    pub fn param_count(&self) -> usize {
        self.groups.iter().flatten().map(|p| p.value.len()).sum()
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = self.config.input_size;
        match x.shape() {
            [_, xc, xh, xw] if (*xc, *xh, *xw) == (c, h, w) => Ok(()),
            other => Err(Error::Autodiff(AutodiffError::Shape(format!(
                "input shape {other:?} does not match the model input [N, {c}, {h}, {w}]"
            )))),
        }
    }

    /// Records a forward pass for `x: [N, C, H, W]`. Dropout masks are drawn
    /// from `rng` in train mode (task head first, then patient head).
    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, opts: ForwardOptions, rng: &mut R) -> Result<ForwardPass> {
        self.record(x, opts, self.mode, rng)
    }

    fn record<R: Rng + ?Sized>(&self, x: &Tensor, opts: ForwardOptions, mode: Mode, rng: &mut R) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let input = g.leaf(x.clone());
        let param_nodes: [Vec<NodeId>; 3] = Group::ALL.map(|grp| {
            self.params(grp)
                .iter()
                .map(|p| g.leaf(p.value.clone()))
                .collect::<Vec<_>>()
        });
        let lookup = |grp: Group, name: &str| -> NodeId {
            let idx = self.groups[grp.index()]
                .iter()
                .position(|p| p.name == name)
                .unwrap_or_else(|| panic!("missing parameter {name}"));
            param_nodes[grp.index()][idx]
        };
        let conv = |name: &str| (lookup(Group::Trunk, &format!("{name}.weight")), lookup(Group::Trunk, &format!("{name}.bias")));
        let norm = |name: &str| {
            let layer = self.norms.iter().find(|n| n.name == name).expect("norm layer");
            NormParams {
                scale: lookup(Group::Trunk, &format!("{name}.scale")),
                shift: lookup(Group::Trunk, &format!("{name}.shift")),
                running: (mode == Mode::Eval).then(|| (layer.running_mean.clone(), layer.running_var.clone())),
                eps: self.config.norm_eps,
            }
        };

        let mut norm_nodes = Vec::with_capacity(self.norms.len());
        let (w, b) = conv("trunk.stem.conv");
        let h = g.conv2d(input, w, b, 1)?;
        let n = apply_norm(&mut g, h, &norm("trunk.stem.norm"))?;
        norm_nodes.push(n);
        let mut h = g.relu(n)?;
        let mut branch_source = None;
        let last_stage = self.config.stage_widths.len() - 1;
        for (s, blk, stride, in_ch, out_ch) in block_plan(&self.config) {
            let name = block_name(s, blk);
            let params = BlockParams {
                conv1: conv(&format!("{name}.conv1")),
                norm1: norm(&format!("{name}.norm1")),
                conv2: conv(&format!("{name}.conv2")),
                projection: needs_projection(stride, in_ch, out_ch).then(|| conv(&format!("{name}.proj"))),
                norm2: norm(&format!("{name}.norm2")),
            };
            let (out, norms) = residual_block(&mut g, h, &params, stride)?;
            norm_nodes.extend(norms);
            h = out;
            if blk + 1 == self.config.blocks_per_stage && self.config.branch == BranchPoint::Stage(s) && s != last_stage {
                branch_source = Some(h);
            }
        }
        let features = g.global_avg_pool(h)?;

        let keep = self.config.dropout_keep;
        let head = |g: &mut Graph, x: NodeId, grp: Group, name: &str, rng: &mut R| -> Result<NodeId> {
            let x = if mode == Mode::Train {
                let mask = dropout_mask(g.value(x).len(), keep, rng);
                g.dropout(x, mask)?
            } else {
                x
            };
            Ok(g.dense(x, lookup(grp, &format!("{name}.weight")), lookup(grp, &format!("{name}.bias")))?)
        };
        let task_logits = head(&mut g, features, Group::Task, "task.dense", rng)?;
        let patient_logits = if opts.patient_head {
            let source = match branch_source {
                Some(stage_out) => stage_out,
                None => features,
            };
            let reversed = if opts.reverse_gradient {
                g.grad_reverse(source, self.config.lambda)?
            } else {
                source
            };
            let pooled = if branch_source.is_some() { g.global_avg_pool(reversed)? } else { reversed };
            Some(head(&mut g, pooled, Group::Patient, "patient.dense", rng)?)
        } else {
            None
        };

        Ok(ForwardPass {
            graph: g,
            input,
            features,
            task_logits,
            patient_logits,
            param_nodes,
            norm_nodes,
        })
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics. No-op for eval-mode passes.
    pub fn update_norm_stats(&mut self, pass: &ForwardPass) {
        let m = self.config.norm_momentum;
        for (layer, &node) in self.norms.iter_mut().zip(&pass.norm_nodes) {
            if let Some((mean, var)) = pass.graph.batch_stats(node) {
                for (r, b) in layer.running_mean.iter_mut().zip(mean) {
                    *r = m * *r + (1.0 - m) * b;
                }
                for (r, b) in layer.running_var.iter_mut().zip(var) {
                    *r = m * *r + (1.0 - m) * b;
                }
            }
        }
    }

    /// Task logits `[N, 2]`; in train mode also updates running statistics.
    pub fn forward_task<R: Rng + ?Sized>(&mut self, x: &Tensor, rng: &mut R) -> Result<Tensor> {
        let pass = self.forward(x, ForwardOptions::task_only(), rng)?;
        self.update_norm_stats(&pass);
        Ok(pass.graph.value(pass.task_logits).clone())
    }

    /// Patient logits `[N, num_patients]`; in train mode also updates
    /// running statistics.
    pub fn forward_patient<R: Rng + ?Sized>(&mut self, x: &Tensor, rng: &mut R) -> Result<Tensor> {
        let pass = self.forward(x, ForwardOptions::both_heads(), rng)?;
        self.update_norm_stats(&pass);
        Ok(pass.graph.value(pass.patient_logits.expect("patient head requested")).clone())
    }

    /// Task logits computed in eval mode regardless of the current mode;
    /// no state changes.
    pub fn predict_task(&self, x: &Tensor) -> Result<Tensor> {
        let mut unused = substream(0, "unused", &[]);
        let pass = self.record(x, ForwardOptions::task_only(), Mode::Eval, &mut unused)?;
        Ok(pass.graph.value(pass.task_logits).clone())
    }

    /// Pooled trunk features `[N, F]` in eval mode; no state changes.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut unused = substream(0, "unused", &[]);
        let pass = self.record(x, ForwardOptions::task_only(), Mode::Eval, &mut unused)?;
        Ok(pass.graph.value(pass.features).clone())
    }
}
