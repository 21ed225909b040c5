use advreg_autodiff::{grad_check_against, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{ForwardOptions, Group, TwoHeadNet};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub group: Group,
    pub name: String,
    pub max_relative_error: f64,
}

/// Finite-difference check of a full two-head training step. Reverse mode
/// runs on `Lc + Lp` with the patient loss behind the reversal; trunk and
/// task parameters are compared with central differences of
/// `Lc - lambda * Lp`, patient parameters with differences of `Lp`.
pub fn check_gradients<R: Rng + ?Sized>(
    net: &TwoHeadNet,
    x: &Tensor,
    labels: &[usize],
    patients: &[usize],
    step: f64,
    rng: &mut R,
) -> Result<Vec<ParamCheck>> {
    let mut pass = net.forward(x, ForwardOptions::both_heads(), rng)?;
    let g = &mut pass.graph;
    let lc = g.softmax_cross_entropy(pass.task_logits, labels.to_vec())?;
    let lp = g.softmax_cross_entropy(pass.patient_logits.expect("both heads"), patients.to_vec())?;
    let objective = g.add(lc, lp)?;
    let weighted = g.scale(lp, -net.lambda())?;
    let reported = g.add(lc, weighted)?;
    let mut out = Vec::new();
    for group in Group::ALL {
        let numeric = if group == Group::Patient { lp } else { reported };
        let nodes = pass.param_nodes(group).to_vec();
        let errors = grad_check_against(&mut pass.graph, objective, numeric, &nodes, step)?;
        out.extend(net.params(group).iter().zip(errors).map(|(p, e)| ParamCheck {
            group,
            name: p.name.clone(),
            max_relative_error: e,
        }));
    }
    Ok(out)
}
