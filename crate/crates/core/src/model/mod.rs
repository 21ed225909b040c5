//! Two-headed residual network: shared trunk, task head, and a patient head
//! behind a gradient reversal.

mod check;
mod checkpoint;
mod config;
mod net;

pub use check::{check_gradients, ParamCheck};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BranchPoint, ModelConfig};
pub use net::{
    dropout, dropout_mask, residual_block, BlockParams, ForwardOptions, ForwardPass, Group, Mode, NormLayer,
    NormParams, Param, TwoHeadNet,
};
