use advreg_autodiff::{Graph, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Task loss, patient loss (adversarial runs only) and the reported
/// trade-off value `Lc - lambda * Lp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "Lc")]
    pub lc: f64,
    #[serde(rename = "Lp")]
    pub lp: Option<f64>,
    #[serde(rename = "L")]
    pub l: f64,
}

impl LossBreakdown {
    pub fn new(lc: f64, lp: Option<f64>, lambda: f64) -> Self {
        let l = match lp {
            Some(p) => lc - lambda * p,
            None => lc,
        };
        Self { lc, lp, l }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    /// What backward runs on: `Lc + Lp`, where `Lp` already sits behind the
    /// gradient reversal inside the network.
    pub objective: NodeId,
    pub task: NodeId,
    pub patient: Option<NodeId>,
}

/// Adds both cross-entropies to `g`. Backward from `objective` gives the
/// trunk `dLc - lambda * dLp`, the task head `dLc` and the patient head
/// `dLp`, provided the patient logits were recorded behind the reversal.
pub fn combined_loss(
    g: &mut Graph,
    task_logits: NodeId,
    task_labels: &[usize],
    patient: Option<(NodeId, &[usize])>,
    lambda: f64,
) -> Result<(LossNodes, LossBreakdown)> {
    let task = g.softmax_cross_entropy(task_logits, task_labels.to_vec())?;
    let lc = g.value(task).item()?;
    let (objective, patient, lp) = match patient {
        Some((logits, labels)) => {
            let lp_node = g.softmax_cross_entropy(logits, labels.to_vec())?;
            let lp = g.value(lp_node).item()?;
            (g.add(task, lp_node)?, Some(lp_node), Some(lp))
        }
        None => (task, None, None),
    };
    Ok((
        LossNodes {
            objective,
            task,
            patient,
        },
        LossBreakdown::new(lc, lp, lambda),
    ))
}
