use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the patient path leaves the trunk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchPoint {
    /// After global average pooling; both heads see the same features.
    #[default]
    Pooled,
    /// After the given stage (0-based); the patient path pools on its own.
    Stage(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// (channels, height, width) of the network input.
    pub input_size: (usize, usize, usize),
    pub stem_width: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub num_patients: usize,
    pub dropout_keep: f64,
    pub lambda: f64,
    pub branch: BranchPoint,
    pub norm_momentum: f64,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: (1, 56, 56),
            stem_width: 16,
            stage_widths: vec![16, 32, 64],
            blocks_per_stage: 2,
            num_patients: 20,
            dropout_keep: 0.8,
            lambda: 0.5,
            branch: BranchPoint::Pooled,
            norm_momentum: 0.9,
            norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Tiny network used for exhaustive finite-difference checks.
    pub fn grad_check_mini() -> Self {
        Self {
            input_size: (1, 8, 8),
            stem_width: 3,
            stage_widths: vec![3, 4],
            blocks_per_stage: 1,
            num_patients: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let (c, h, w) = self.input_size;
        if c == 0 || h == 0 || w == 0 {
            return fail(format!("input size {:?} has a zero dimension", self.input_size));
        }
        if self.stem_width == 0 || self.stage_widths.is_empty() || self.stage_widths.contains(&0) {
            return fail(format!(
                "stage widths must be non-empty and positive, got stem {} / {:?}",
                self.stem_width, self.stage_widths
            ));
        }
        if self.blocks_per_stage == 0 {
            return fail("blocks_per_stage must be positive".into());
        }
        if self.num_patients < 2 {
            return fail(format!("need at least 2 patients, got {}", self.num_patients));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return fail(format!("dropout keep probability {} outside (0, 1]", self.dropout_keep));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.norm_momentum > 0.0 && self.norm_momentum < 1.0) || !(self.norm_eps > 0.0) {
            return fail(format!(
                "normalization momentum {} / epsilon {} out of range",
                self.norm_momentum, self.norm_eps
            ));
        }
        if let BranchPoint::Stage(s) = self.branch {
            if s >= self.stage_widths.len() {
                return fail(format!(
                    "branch stage {s} does not exist ({} stages)",
                    self.stage_widths.len()
                ));
            }
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        *self.stage_widths.last().expect("validated")
    }

    pub fn patient_input_width(&self) -> usize {
        match self.branch {
            BranchPoint::Pooled => self.feature_width(),
            BranchPoint::Stage(s) => self.stage_widths[s],
        }
    }
}
