use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::substream;

/// Texture seed used by every patient when confounding is switched off.
pub const SHARED_TEXTURE_SEED: u64 = 0x5eed_7e47_0000_0000;

/// Nominal vessel radius as a fraction of the shorter image side.
pub const NOMINAL_RADIUS: f64 = 0.2;

/// Per-patient appearance: the nuisance factors a patient-invariant trunk
/// has to ignore. All nuisance fields are already scaled by
/// `confound_strength`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: u32,
    pub intensity_offset: f64,
    pub ring_amplitude: f64,
    pub ring_phase: f64,
    pub ring_frequency: f64,
    pub texture_seed: u64,
    /// Vessel lumen radius in pixels.
    pub vessel_radius: f64,
    pub confound_strength: f64,
}

impl PatientProfile {
    /// Draws the profile of `patient_id`. The raw draws do not depend on
    /// `confound_strength`, which only scales them, so the same patient at
    /// two strengths differs only in nuisance magnitude.
    pub fn draw(seed: u64, patient_id: u32, confound_strength: f64, image_size: (usize, usize)) -> Self {
        let mut rng = substream(seed, "patient", &[u64::from(patient_id)]);
        let offset: f64 = rng.random_range(-0.12..0.12);
        let amplitude: f64 = rng.random_range(0.05..0.15);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let frequency = f64::from(rng.random_range(2u32..=6));
        let texture_seed: u64 = rng.random();
        let radius_jitter: f64 = rng.random_range(-0.15..0.15);

        let s = confound_strength;
        let unit = image_size.0.min(image_size.1) as f64;
        Self {
            patient_id,
            intensity_offset: s * offset,
            ring_amplitude: s * amplitude,
            ring_phase: phase,
            ring_frequency: frequency,
            texture_seed: if s == 0.0 { SHARED_TEXTURE_SEED } else { texture_seed },
            vessel_radius: NOMINAL_RADIUS * unit * (1.0 + s * radius_jitter),
            confound_strength: s,
        }
    }
}
