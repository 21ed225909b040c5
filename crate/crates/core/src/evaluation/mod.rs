//! Held-out metrics, the patient-identity probe and the scenario matrix.

mod evaluate;
mod matrix;
mod metrics;
mod probe;
mod report;

pub use evaluate::{check_patient_disjoint, evaluate_model};
pub use matrix::{
    run_experiment_matrix, run_experiment_matrix_with, run_single, CellSummary, MatrixConfig, MatrixReport, Regime,
    RunResult,
};
pub use metrics::{argmax_predictions, compute_metrics, ConfusionCounts, MetricsReport};
pub use probe::{fit_probe, patient_probe, pixel_features, pixel_probe, trunk_features, ProbeConfig, ProbeResult};
pub use report::{config_digest, format_cell, render_table, Summary, TableColumn};
