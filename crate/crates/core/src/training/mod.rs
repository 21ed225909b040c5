//! Per-group Adam training of the two-headed network under the four
//! scenarios.

mod adam;
mod loss;
mod scenario;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use loss::{combined_loss, LossBreakdown, LossNodes};
pub use scenario::Scenario;
pub use train::{
    assemble_batch, batch_gradients, bind_model_config, train_epoch, train_scenario, train_scenario_with,
    train_step, Batch, EpochRecord, Optimizer, TrainConfig, TrainOutcome,
};
