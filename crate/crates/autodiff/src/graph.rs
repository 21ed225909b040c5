//! Tape of tensor operations with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so node ids are a topological
//! order by construction. Leaves hold inputs and parameters; their values
//! can be replaced with [`Graph::set_value`] and the rest of the tape
//! re-evaluated with [`Graph::recompute_from`], which is what the
//! finite-difference checker relies on.

use crate::error::{AutodiffError, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Relu(NodeId),
    /// Identity forward; multiplies the upstream gradient by `-lambda`.
    GradReverse {
        input: NodeId,
        lambda: f64,
    },
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
    },
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    GlobalAvgPool(NodeId),
    /// Normalization with statistics of the current batch.
    BatchNorm {
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
        eps: f64,
    },
    /// Normalization with fixed (running) statistics.
    Normalize {
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Vec<f64>,
        var: Vec<f64>,
        eps: f64,
    },
    /// Element-wise product with a fixed, pre-scaled mask.
    Dropout {
        input: NodeId,
        mask: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
    },
}

/// Forward by-products needed by backward.
#[derive(Clone, Debug, Default)]
enum Saved {
    #[default]
    Nothing,
    Norm {
        mean: Vec<f64>,
        var: Vec<f64>,
        inv_std: Vec<f64>,
        xhat: Vec<f64>,
    },
    Probs(Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    saved: Saved,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that influences it.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMap {
    grads: Vec<Option<Tensor>>,
}

impl GradMap {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, or zeros shaped like `like` when `id` does not
    /// influence the loss.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn dims_nchw(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() < 2 {
        return Err(AutodiffError::Shape(format!(
            "{what}: expected at least [N, C], got {s:?}"
        )));
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Batch mean and (biased) variance computed by a `BatchNorm` node.
    pub fn batch_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id.0].saved {
            Saved::Norm { mean, var, .. } if matches!(self.nodes[id.0].op, Op::BatchNorm { .. }) => {
                Some((mean, var))
            }
            _ => None,
        }
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            saved: Saved::Nothing,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Replaces a leaf value; the shape must not change.
    pub fn set_value(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = self
            .nodes
            .get_mut(id.0)
            .ok_or_else(|| AutodiffError::Contract(format!("unknown node {}", id.0)))?;
        if !matches!(node.op, Op::Leaf) {
            return Err(AutodiffError::Contract(format!(
                "node {} is not a leaf",
                id.0
            )));
        }
        node.value.expect_same_shape(&value, "set_value")?;
        node.value = value;
        Ok(())
    }

    /// Re-evaluates every non-leaf node after `first` in tape order.
    pub fn recompute_from(&mut self, first: NodeId) -> Result<()> {
        for i in first.0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let (value, saved) = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
            self.nodes[i].saved = saved;
        }
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        for input in op_inputs(&op) {
            if input.0 >= self.nodes.len() {
                return Err(AutodiffError::Contract(format!(
                    "input node {} does not precede its consumer",
                    input.0
                )));
            }
        }
        let (value, saved) = self.eval(&op)?;
        self.nodes.push(Node { op, value, saved });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, factor))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    /// Gradient reversal: identity forward, `-lambda` times the upstream
    /// gradient backward.
    pub fn grad_reverse(&mut self, input: NodeId, lambda: f64) -> Result<NodeId> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(AutodiffError::Config(format!(
                "gradient reversal strength must be finite and non-negative, got {lambda}"
            )));
        }
        self.push(Op::GradReverse { input, lambda })
    }

    /// Same-padded cross-correlation of `[N,C,H,W]` with `[F,C,kh,kw]`.
    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, stride: usize) -> Result<NodeId> {
        self.push(Op::Conv2d {
            input,
            weight,
            bias,
            stride,
        })
    }

    /// `x · w + b` for `x: [N,D]`, `w: [D,K]`, `b: [K]`.
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::Dense {
            input,
            weight,
            bias,
        })
    }

    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        self.push(Op::GlobalAvgPool(input))
    }

    pub fn batch_norm(&mut self, input: NodeId, scale: NodeId, shift: NodeId, eps: f64) -> Result<NodeId> {
        self.push(Op::BatchNorm {
            input,
            scale,
            shift,
            eps,
        })
    }

    pub fn normalize(
        &mut self,
        input: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Vec<f64>,
        var: Vec<f64>,
        eps: f64,
    ) -> Result<NodeId> {
        self.push(Op::Normalize {
            input,
            scale,
            shift,
            mean,
            var,
            eps,
        })
    }

    /// Multiplies by `mask`, which must already carry the inverted-dropout
    /// scaling.
    pub fn dropout(&mut self, input: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        self.push(Op::Dropout { input, mask })
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        self.push(Op::SoftmaxCrossEntropy { logits, labels })
    }

    fn eval(&self, op: &Op) -> Result<(Tensor, Saved)> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        let plain = |t: Tensor| Ok((t, Saved::Nothing));
        match op {
            Op::Leaf => Err(AutodiffError::Contract("leaves are not evaluated".into())),
            Op::Add(a, b) => plain(v(a).zip_map(v(b), |x, y| x + y)?),
            Op::Sub(a, b) => plain(v(a).zip_map(v(b), |x, y| x - y)?),
            Op::Mul(a, b) => plain(v(a).zip_map(v(b), |x, y| x * y)?),
            Op::Scale(a, c) => plain(v(a).scale(*c)),
            Op::Square(a) => plain(v(a).map(|x| x * x)),
            Op::Sum(a) => plain(Tensor::scalar(v(a).sum())),
            Op::Mean(a) => plain(Tensor::scalar(v(a).sum() / v(a).len() as f64)),
            Op::Relu(a) => plain(v(a).map(|x| if x > 0.0 { x } else { 0.0 })),
            Op::GradReverse { input, .. } => plain(v(input).clone()),
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            } => {
                let geom = conv_geom(v(input), v(weight), v(bias), *stride)?;
                let out = kernels::conv2d_forward(v(input).data(), v(weight).data(), v(bias).data(), &geom);
                plain(Tensor::new(vec![geom.n, geom.f, geom.oh, geom.ow], out)?)
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let (n, d, k) = dense_dims(v(input), v(weight), v(bias))?;
                let out = kernels::dense_forward(v(input).data(), v(weight).data(), v(bias).data(), n, d, k);
                plain(Tensor::new(vec![n, k], out)?)
            }
            Op::GlobalAvgPool(a) => {
                let x = v(a);
                if x.ndim() != 4 {
                    return Err(AutodiffError::Shape(format!(
                        "global_avg_pool expects [N,C,H,W], got {:?}",
                        x.shape()
                    )));
                }
                let (n, c, spatial) = dims_nchw(x, "global_avg_pool")?;
                let out = x
                    .data()
                    .chunks(spatial)
                    .map(|plane| plane.iter().sum::<f64>() / spatial as f64)
                    .collect();
                plain(Tensor::new(vec![n, c], out)?)
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                eps,
            } => {
                let x = v(input);
                let dims = norm_dims(x, v(scale), v(shift), "batch_norm")?;
                let (mean, var) = kernels::channel_stats(x.data(), dims.0, dims.1, dims.2);
                let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s + eps).sqrt()).collect();
                let (y, xhat) = kernels::normalize(x.data(), dims, &mean, &inv_std, v(scale).data(), v(shift).data());
                Ok((
                    Tensor::new(x.shape().to_vec(), y)?,
                    Saved::Norm {
                        mean,
                        var,
                        inv_std,
                        xhat,
                    },
                ))
            }
            Op::Normalize {
                input,
                scale,
                shift,
                mean,
                var,
                eps,
            } => {
                let x = v(input);
                let dims = norm_dims(x, v(scale), v(shift), "normalize")?;
                if mean.len() != dims.1 || var.len() != dims.1 {
                    return Err(AutodiffError::Shape(format!(
                        "normalize: statistics length {} / {} for {} channels",
                        mean.len(),
                        var.len(),
                        dims.1
                    )));
                }
                let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s + eps).sqrt()).collect();
                let (y, xhat) = kernels::normalize(x.data(), dims, mean, &inv_std, v(scale).data(), v(shift).data());
                Ok((
                    Tensor::new(x.shape().to_vec(), y)?,
                    Saved::Norm {
                        mean: mean.clone(),
                        var: var.clone(),
                        inv_std,
                        xhat,
                    },
                ))
            }
            Op::Dropout { input, mask } => {
                let x = v(input);
                if mask.len() != x.len() {
                    return Err(AutodiffError::Shape(format!(
                        "dropout mask has {} entries for {} inputs",
                        mask.len(),
                        x.len()
                    )));
                }
                let data = x.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                plain(Tensor::new(x.shape().to_vec(), data)?)
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let z = v(logits);
                if z.ndim() != 2 {
                    return Err(AutodiffError::Shape(format!(
                        "cross entropy expects [N,K] logits, got {:?}",
                        z.shape()
                    )));
                }
                let (n, k) = (z.shape()[0], z.shape()[1]);
                if labels.len() != n {
                    return Err(AutodiffError::Input(format!(
                        "{} labels for a batch of {n}",
                        labels.len()
                    )));
                }
                if let Some(bad) = labels.iter().find(|&&l| l >= k) {
                    return Err(AutodiffError::Input(format!(
                        "label {bad} out of range for {k} classes"
                    )));
                }
                let mut probs = vec![0.0; n * k];
                let mut loss = 0.0;
                for (i, row) in z.data().chunks(k).enumerate() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|x| (x - max).exp()).sum();
                    let log_denom = denom.ln() + max;
                    for (j, x) in row.iter().enumerate() {
                        probs[i * k + j] = (x - log_denom).exp();
                    }
                    loss += log_denom - row[labels[i]];
                }
                Ok((Tensor::scalar(loss / n as f64), Saved::Probs(probs)))
            }
        }
    }

    /// Reverse-mode gradients of the scalar node `loss` with respect to
    /// every node it depends on.
    pub fn backward(&self, loss: NodeId) -> Result<GradMap> {
        let loss_len = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| AutodiffError::Contract(format!("unknown node {}", loss.0)))?
            .value
            .len();
        if loss_len != 1 {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar loss, node {} has {loss_len} elements",
                loss.0
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(self.nodes[loss.0].value.shape()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            for (input, contribution) in self.local_grads(i, &g)? {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }
        Ok(GradMap { grads })
    }

    /// Contributions of node `i`'s upstream gradient `g` to its inputs.
    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(NodeId, Tensor)>> {
        let node = &self.nodes[i];
        let v = |id: &NodeId| &self.nodes[id.0].value;
        let shaped = |like: &Tensor, data: Vec<f64>| Tensor::new(like.shape().to_vec(), data);
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(v(b), |x, y| x * y)?),
                (*b, g.zip_map(v(a), |x, y| x * y)?),
            ],
            Op::Scale(a, c) => vec![(*a, g.scale(*c))],
            Op::Square(a) => vec![(*a, g.zip_map(v(a), |x, y| 2.0 * x * y)?)],
            Op::Sum(a) => vec![(*a, Tensor::full(v(a).shape(), g.data()[0]))],
            Op::Mean(a) => {
                let n = v(a).len() as f64;
                vec![(*a, Tensor::full(v(a).shape(), g.data()[0] / n))]
            }
            Op::Relu(a) => vec![(*a, g.zip_map(v(a), |gv, x| if x > 0.0 { gv } else { 0.0 })?)],
            Op::GradReverse { input, lambda } => vec![(*input, g.scale(-lambda))],
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            } => {
                let geom = conv_geom(v(input), v(weight), v(bias), *stride)?;
                let (dx, dw, db) = kernels::conv2d_backward(v(input).data(), v(weight).data(), g.data(), &geom);
                vec![
                    (*input, shaped(v(input), dx)?),
                    (*weight, shaped(v(weight), dw)?),
                    (*bias, shaped(v(bias), db)?),
                ]
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let (n, d, k) = dense_dims(v(input), v(weight), v(bias))?;
                let (dx, dw, db) = kernels::dense_backward(v(input).data(), v(weight).data(), g.data(), n, d, k);
                vec![
                    (*input, shaped(v(input), dx)?),
                    (*weight, shaped(v(weight), dw)?),
                    (*bias, shaped(v(bias), db)?),
                ]
            }
            Op::GlobalAvgPool(a) => {
                let x = v(a);
                let spatial: usize = x.shape()[2..].iter().product();
                let inv = 1.0 / spatial as f64;
                let data = g
                    .data()
                    .iter()
                    .flat_map(|gv| std::iter::repeat_n(gv * inv, spatial))
                    .collect();
                vec![(*a, shaped(x, data)?)]
            }
            Op::BatchNorm {
                input, scale, shift, ..
            } => {
                let Saved::Norm { inv_std, xhat, .. } = &node.saved else {
                    return Err(AutodiffError::Contract("batch norm without saved statistics".into()));
                };
                let dims = dims_nchw(v(input), "batch_norm")?;
                let (sum_g, sum_gx) = kernels::channel_grad_sums(g.data(), xhat, dims);
                let (n, c, spatial) = dims;
                let count = (n * spatial) as f64;
                let gamma = v(scale).data();
                let mut dx = vec![0.0; g.len()];
                for ni in 0..n {
                    for ci in 0..c {
                        let k = gamma[ci] * inv_std[ci] / count;
                        let base = (ni * c + ci) * spatial;
                        for j in base..base + spatial {
                            dx[j] = k * (count * g.data()[j] - sum_g[ci] - xhat[j] * sum_gx[ci]);
                        }
                    }
                }
                vec![
                    (*input, shaped(v(input), dx)?),
                    (*scale, shaped(v(scale), sum_gx)?),
                    (*shift, shaped(v(shift), sum_g)?),
                ]
            }
            Op::Normalize {
                input, scale, shift, ..
            } => {
                let Saved::Norm { inv_std, xhat, .. } = &node.saved else {
                    return Err(AutodiffError::Contract("normalize without saved statistics".into()));
                };
                let dims = dims_nchw(v(input), "normalize")?;
                let (sum_g, sum_gx) = kernels::channel_grad_sums(g.data(), xhat, dims);
                let (n, c, spatial) = dims;
                let gamma = v(scale).data();
                let mut dx = vec![0.0; g.len()];
                for ni in 0..n {
                    for ci in 0..c {
                        let k = gamma[ci] * inv_std[ci];
                        let base = (ni * c + ci) * spatial;
                        for j in base..base + spatial {
                            dx[j] = k * g.data()[j];
                        }
                    }
                }
                vec![
                    (*input, shaped(v(input), dx)?),
                    (*scale, shaped(v(scale), sum_gx)?),
                    (*shift, shaped(v(shift), sum_g)?),
                ]
            }
            Op::Dropout { input, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                vec![(*input, shaped(v(input), data)?)]
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let Saved::Probs(probs) = &node.saved else {
                    return Err(AutodiffError::Contract("cross entropy without saved probabilities".into()));
                };
                let z = v(logits);
                let (n, k) = (z.shape()[0], z.shape()[1]);
                let scale = g.data()[0] / n as f64;
                let mut d = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * k + l] -= 1.0;
                }
                d.iter_mut().for_each(|x| *x *= scale);
                vec![(*logits, shaped(z, d)?)]
            }
        })
    }
}

fn op_inputs(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Scale(a, _) | Op::Square(a) | Op::Sum(a) | Op::Mean(a) | Op::Relu(a) | Op::GlobalAvgPool(a) => {
            vec![*a]
        }
        Op::GradReverse { input, .. } | Op::Dropout { input, .. } => vec![*input],
        Op::Conv2d {
            input, weight, bias, ..
        }
        | Op::Dense {
            input, weight, bias, ..
        } => vec![*input, *weight, *bias],
        Op::BatchNorm {
            input, scale, shift, ..
        }
        | Op::Normalize {
            input, scale, shift, ..
        } => vec![*input, *scale, *shift],
        Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
    }
}

fn conv_geom(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<ConvGeom> {
    if stride == 0 {
        return Err(AutodiffError::Shape("conv2d stride must be positive".into()));
    }
    if x.ndim() != 4 || w.ndim() != 4 {
        return Err(AutodiffError::Shape(format!(
            "conv2d expects 4-d input and kernel, got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    }
    if x.shape()[1] != w.shape()[1] {
        return Err(AutodiffError::Shape(format!(
            "conv2d channel mismatch: input has {}, kernel expects {}",
            x.shape()[1],
            w.shape()[1]
        )));
    }
    if b.shape() != [w.shape()[0]] {
        return Err(AutodiffError::Shape(format!(
            "conv2d bias shape {:?} for {} filters",
            b.shape(),
            w.shape()[0]
        )));
    }
    Ok(ConvGeom::new(x.shape(), w.shape(), stride))
}

fn dense_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if x.ndim() != 2 || w.ndim() != 2 || x.shape()[1] != w.shape()[0] || b.shape() != [w.shape()[1]] {
        return Err(AutodiffError::Shape(format!(
            "dense: incompatible shapes x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[1], w.shape()[1]))
}

fn norm_dims(x: &Tensor, scale: &Tensor, shift: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    let dims = dims_nchw(x, what)?;
    if scale.shape() != [dims.1] || shift.shape() != [dims.1] {
        return Err(AutodiffError::Shape(format!(
            "{what}: scale {:?} / shift {:?} for {} channels",
            scale.shape(),
            shift.shape(),
            dims.1
        )));
    }
    Ok(dims)
}
