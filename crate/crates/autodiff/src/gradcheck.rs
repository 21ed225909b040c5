use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, NodeId, Op};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively,
/// so parameters whose exact gradient is zero do not divide rounding
/// noise by zero.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares reverse-mode gradients of `loss` with central differences
/// `(L(θ+h) - L(θ-h)) / 2h`, one parameter element at a time. Returns
/// the maximum relative error per entry of `params`. The graph is left
/// with its original leaf values and forward state.
pub fn grad_check(graph: &mut Graph, loss: NodeId, params: &[NodeId], step: f64) -> Result<Vec<f64>> {
    grad_check_against(graph, loss, loss, params, step)
}

/// As [`grad_check`], but the reverse-mode side differentiates `analytic`
/// while the finite differences are taken of `numeric`. Needed where the
/// backward pass is deliberately not the derivative of the forward value,
/// as behind a gradient reversal.
pub fn grad_check_against(
    graph: &mut Graph,
    analytic: NodeId,
    numeric: NodeId,
    params: &[NodeId],
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(AutodiffError::Config(format!("step must be positive, got {step}")));
    }
    for &p in params {
        if !matches!(graph.op(p), Op::Leaf) {
            return Err(AutodiffError::Contract(format!("node {} is not a leaf", p.index())));
        }
    }
    let grads = graph.backward(analytic)?;
    let mut errors = Vec::with_capacity(params.len());
    for &p in params {
        let original = graph.value(p).clone();
        let exact = grads.get_or_zeros(p, &original);
        let mut worst: f64 = 0.0;
        for i in 0..original.len() {
            let mut probe = |delta: f64| -> Result<f64> {
                let mut shifted = original.clone();
                shifted.data_mut()[i] += delta;
                graph.set_value(p, shifted)?;
                graph.recompute_from(p)?;
                graph.value(numeric).item()
            };
            let plus = probe(step)?;
            let minus = probe(-step)?;
            let estimate = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(exact.data()[i], estimate));
        }
        graph.set_value(p, original)?;
        graph.recompute_from(p)?;
        errors.push(worst);
    }
    Ok(errors)
}
