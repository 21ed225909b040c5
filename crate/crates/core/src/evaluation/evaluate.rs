use std::collections::BTreeSet;

use advreg_autodiff::Tensor;

use super::metrics::{argmax_predictions, ConfusionCounts, MetricsReport};
use crate::data::{center_crop, Dataset, SplitRole};
use crate::error::{Error, Result};
use crate::model::TwoHeadNet;

const EVAL_BATCH: usize = 64;

/// Fails unless every test patient is absent from the training index.
pub fn check_patient_disjoint(dataset: &Dataset) -> Result<()> {
    let m = &dataset.manifest;
    let test: BTreeSet<u32> = m.patients_with(SplitRole::Test).into_iter().collect();
    if let Some(p) = m.train_patients.iter().find(|p| test.contains(p)) {
        return Err(Error::Contract(format!("test patient {p} also appears in training")));
    }
    m.validate()
}

/// Task-head metrics over every test-split image. Images are center
/// cropped to the network input; the forward pass runs in eval mode and
/// leaves the network untouched.
pub fn evaluate_model(net: &TwoHeadNet, dataset: &Dataset) -> Result<MetricsReport> {
    check_patient_disjoint(dataset)?;
    let idx = dataset.indices(SplitRole::Test);
    if idx.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let (_, h, w) = net.config().input_size;
    let mut predictions = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let imgs = chunk
            .iter()
            .map(|&i| center_crop(&dataset.image(i), (h, w)))
            .collect::<Result<Vec<_>>>()?;
        let logits = net.predict_task(&Tensor::stack(&imgs)?)?;
        predictions.extend(argmax_predictions(&logits)?);
    }
    let labels: Vec<u8> = idx.iter().map(|&i| dataset.manifest.samples[i].label).collect();
    Ok(MetricsReport::from_counts(ConfusionCounts::from_predictions(&predictions, &labels)?))
}
