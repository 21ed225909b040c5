//! Toy cross-sectional vessel renderer.
//!
//! An image is a dark lumen surrounded by a bright wall ring and a fading
//! tissue halo. A positive sample adds a thickened, brighter arc ("plaque")
//! just outside the wall. Patient nuisances are a global intensity offset,
//! an angular ring artifact, a patient-specific speckle texture and the
//! vessel radius.

use std::f64::consts::{PI, TAU};

use advreg_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::profile::{PatientProfile, SHARED_TEXTURE_SEED};
use crate::rng::StreamRng;

const BACKGROUND: f64 = 0.2;
const WALL_PEAK: f64 = 0.3;
const WALL_WIDTH: f64 = 0.045;
const HALO_PEAK: f64 = 0.12;
const HALO_DECAY: f64 = 0.12;
const ARTIFACT_WIDTH: f64 = 0.1;
const TEXTURE_AMPLITUDE: f64 = 0.06;
const TEXTURE_GRATINGS: usize = 4;
const NOISE_SIGMA: f64 = 0.03;

/// Plaque arc geometry, in units of the shorter image side.
pub const PLAQUE_OFFSET: f64 = 0.06;
pub const PLAQUE_HALF_DEPTH: f64 = 0.05;

#[derive(Clone, Copy, Debug)]
struct Grating {
    freq: f64,
    cos: f64,
    sin: f64,
}

/// Frequencies and orientations keyed by `texture_seed`; the phases are
/// drawn per sample, so a patient's texture is a statistical signature
/// rather than a fixed pixel pattern.
fn gratings(texture_seed: u64) -> Vec<Grating> {
    let mut rng = ChaCha8Rng::seed_from_u64(texture_seed);
    (0..TEXTURE_GRATINGS)
        .map(|_| {
            let freq: f64 = rng.random_range(3.0..9.0);
            let angle: f64 = rng.random_range(0.0..PI);
            Grating {
                freq,
                cos: angle.cos(),
                sin: angle.sin(),
            }
        })
        .collect()
}

/// Raised-cosine window: 1 at 0, exactly 0 for `|t| >= 1`.
fn window(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        let c = (0.5 * PI * t).cos();
        c * c
    }
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Per-sample random draws. Everything is drawn regardless of the label so
/// that the label-0 and label-1 renderings of one stream share all other
/// factors.
#[derive(Clone, Debug)]
pub struct SampleDraws {
    pub center_shift: (f64, f64),
    pub radius_scale: f64,
    pub plaque_angle: f64,
    pub plaque_half_width: f64,
    pub plaque_amplitude: f64,
    texture_phases: Vec<f64>,
    noise: Vec<f64>,
}

impl SampleDraws {
    pub fn draw(rng: &mut StreamRng, size: (usize, usize)) -> Self {
        let unit = size.0.min(size.1) as f64;
        let shift = 0.015 * unit;
        let center_shift = (rng.random_range(-shift..shift), rng.random_range(-shift..shift));
        let radius_scale = rng.random_range(0.97..1.03);
        let plaque_angle = rng.random_range(0.0..TAU);
        let plaque_half_width = rng.random_range(0.35..0.6);
        let plaque_amplitude = rng.random_range(0.35..0.5);
        let texture_phases = (0..2 * TEXTURE_GRATINGS).map(|_| rng.random_range(0.0..TAU)).collect();
        let normal = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
        let noise = (0..size.0 * size.1).map(|_| normal.sample(rng)).collect();
        Self {
            center_shift,
            radius_scale,
            plaque_angle,
            plaque_half_width,
            plaque_amplitude,
            texture_phases,
            noise,
        }
    }
}

/// Plaque intensity contribution at polar position `(r, theta)` relative to
/// a wall of radius `radius`; zero outside the arc's support.
pub fn plaque_value(draws: &SampleDraws, radius: f64, unit: f64, r: f64, theta: f64) -> f64 {
    let angular = window(wrap_angle(theta - draws.plaque_angle) / draws.plaque_half_width);
    if angular == 0.0 {
        return 0.0;
    }
    let radial = window((r - radius - PLAQUE_OFFSET * unit) / (PLAQUE_HALF_DEPTH * unit));
    draws.plaque_amplitude * angular * radial
}

/// Renders one `[1, H, W]` image in `[0, 1]`.
pub fn render_image(profile: &PatientProfile, label: u8, size: (usize, usize), rng: &mut StreamRng) -> Tensor {
    let draws = SampleDraws::draw(rng, size);
    render_with(profile, label, size, &draws)
}

pub fn render_with(profile: &PatientProfile, label: u8, size: (usize, usize), draws: &SampleDraws) -> Tensor {
    let (h, w) = size;
    let unit = h.min(w) as f64;
    let cy = (h as f64 - 1.0) / 2.0 + draws.center_shift.0;
    let cx = (w as f64 - 1.0) / 2.0 + draws.center_shift.1;
    let radius = profile.vessel_radius * draws.radius_scale;
    let s = profile.confound_strength;

    let own = gratings(profile.texture_seed);
    let shared = gratings(SHARED_TEXTURE_SEED);
    let norm = 1.0 / (TEXTURE_GRATINGS as f64).sqrt();

    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let r = dy.hypot(dx);
            let theta = dy.atan2(dx);
            let d = (r - radius) / unit;

            let wall = WALL_PEAK * (-(d / WALL_WIDTH).powi(2)).exp();
            let halo = if d > 0.0 { HALO_PEAK * (-d / HALO_DECAY).exp() } else { 0.0 };
            let band = (-(d / ARTIFACT_WIDTH).powi(2)).exp();
            let ring = profile.ring_amplitude * (profile.ring_frequency * theta + profile.ring_phase).cos() * band;

            let (u, v) = (x as f64 / unit, y as f64 / unit);
            let texture_at = |gs: &[Grating], phases: &[f64]| -> f64 {
                gs.iter()
                    .zip(phases)
                    .map(|(g, p)| (TAU * g.freq * (u * g.cos + v * g.sin) + p).cos())
                    .sum::<f64>()
                    * norm
            };
            let texture = TEXTURE_AMPLITUDE
                * ((1.0 - s) * texture_at(&shared, &draws.texture_phases[..TEXTURE_GRATINGS])
                    + s * texture_at(&own, &draws.texture_phases[TEXTURE_GRATINGS..]));

            let mut value =
                BACKGROUND + wall + halo + profile.intensity_offset + ring + texture + draws.noise[y * w + x];
            if label == 1 {
                value += plaque_value(draws, radius, unit, r, theta);
            }
            data.push(value.clamp(0.0, 1.0));
        }
    }
    Tensor::new(vec![1, h, w], data).expect("render shape")
}
