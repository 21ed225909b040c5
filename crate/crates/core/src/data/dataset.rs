use std::collections::{BTreeMap, BTreeSet};

use advreg_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::profile::PatientProfile;
use super::render::render_image;
use crate::error::{Error, Result};
use crate::rng::substream;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub patients: usize,
    pub images: usize,
    pub test_patients: usize,
    /// Images assigned to the test patients in total; proportional to the
    /// patient count when unset.
    pub test_images: Option<usize>,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub confound_strength: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            patients: 24,
            images: 1200,
            test_patients: 4,
            test_images: Some(400),
            height: 64,
            width: 64,
            seed: 0,
            confound_strength: 0.8,
        }
    }
}

impl GeneratorConfig {
    /// 36 patients, 2600 images, 8 held-out patients holding 700 images.
    pub fn large_scale() -> Self {
        Self {
            patients: 36,
            images: 2600,
            test_patients: 8,
            test_images: Some(700),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.test_patients >= self.patients {
            return fail(format!(
                "test patient count {} must be smaller than the patient count {}",
                self.test_patients, self.patients
            ));
        }
        if self.test_patients < 2 || self.patients - self.test_patients < 2 {
            return fail(format!(
                "need at least 2 patients per split, got {} train / {} test",
                self.patients - self.test_patients,
                self.test_patients
            ));
        }
        let test_images = self.test_image_count();
        if test_images < 2 * self.test_patients || self.images < test_images + 2 * (self.patients - self.test_patients) {
            return fail(format!(
                "{} images cannot give every one of {} patients at least two images ({} held out)",
                self.images, self.patients, test_images
            ));
        }
        if self.height < 8 || self.width < 8 {
            return fail(format!("image size {}x{} is too small", self.height, self.width));
        }
        if !(0.0..=1.0).contains(&self.confound_strength) {
            return fail(format!("confound strength {} outside [0, 1]", self.confound_strength));
        }
        Ok(())
    }

    fn test_image_count(&self) -> usize {
        self.test_images.unwrap_or_else(|| {
            ((self.images * self.test_patients) as f64 / self.patients as f64).round() as usize
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Test,
    /// Dropped from training by a reduced-patient regime.
    Unused,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u32,
    pub patient_id: u32,
    /// 1 = plaque, 0 = no plaque.
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: GeneratorConfig,
    pub patients: Vec<PatientProfile>,
    pub samples: Vec<SampleRecord>,
    pub split: BTreeMap<u32, SplitRole>,
    /// Training patients in patient-head order: entry `i` is the patient id
    /// behind patient-head output `i`.
    pub train_patients: Vec<u32>,
}

impl DatasetManifest {
    pub fn role(&self, patient_id: u32) -> Option<SplitRole> {
        self.split.get(&patient_id).copied()
    }

    pub fn patients_with(&self, role: SplitRole) -> Vec<u32> {
        self.split.iter().filter(|(_, r)| **r == role).map(|(p, _)| *p).collect()
    }

    /// Contiguous patient-head index of a training patient.
    pub fn train_index(&self, patient_id: u32) -> Option<usize> {
        self.train_patients.iter().position(|&p| p == patient_id)
    }

    /// Checks patient-disjointness and internal consistency.
    pub fn validate(&self) -> Result<()> {
        let known: BTreeSet<u32> = self.patients.iter().map(|p| p.patient_id).collect();
        for s in &self.samples {
            if !known.contains(&s.patient_id) {
                return Err(Error::Contract(format!(
                    "sample {} references unknown patient {}",
                    s.sample_id, s.patient_id
                )));
            }
            if s.label > 1 {
                return Err(Error::Contract(format!("sample {} has label {}", s.sample_id, s.label)));
            }
        }
        for p in &known {
            if !self.split.contains_key(p) {
                return Err(Error::Contract(format!("patient {p} has no split assignment")));
            }
        }
        let train: BTreeSet<u32> = self.patients_with(SplitRole::Train).into_iter().collect();
        let listed: BTreeSet<u32> = self.train_patients.iter().copied().collect();
        if train != listed || listed.len() != self.train_patients.len() {
            return Err(Error::Contract(
                "training patient index disagrees with the split table".into(),
            ));
        }
        Ok(())
    }
}

/// Manifest plus images stored as `f32` in `sample_id` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<f32>,
}

impl Dataset {
    pub fn image_size(&self) -> (usize, usize) {
        (self.manifest.config.height, self.manifest.config.width)
    }

    pub fn image(&self, index: usize) -> Tensor {
        let (h, w) = self.image_size();
        let px = &self.images[index * h * w..(index + 1) * h * w];
        Tensor::new(vec![1, h, w], px.iter().map(|&v| f64::from(v)).collect()).expect("image shape")
    }

    /// Indices of samples whose patient has `role`.
    pub fn indices(&self, role: SplitRole) -> Vec<usize> {
        self.manifest
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| self.manifest.role(s.patient_id) == Some(role))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_train_patients(&self) -> usize {
        self.manifest.train_patients.len()
    }
}

/// Seeded choice of `count` distinct patients.
fn draw_patients(ids: &[u32], count: usize, seed: u64, stream: &str) -> Vec<u32> {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut substream(seed, stream, &[]));
    let mut chosen: Vec<u32> = shuffled.into_iter().take(count).collect();
    chosen.sort_unstable();
    chosen
}

/// Near-uniform allocation: weights jittered by ±15 %, rounded by largest
/// remainder, at least two images each.
fn allocate(total: usize, patients: &[u32], seed: u64) -> Vec<usize> {
    let n = patients.len();
    let mut rng = substream(seed, "allocation", &[]);
    let weights: Vec<f64> = (0..n).map(|_| 1.0 + rng.random_range(-0.15..0.15)).collect();
    let free = total - 2 * n;
    let wsum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| free as f64 * w / wsum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = free - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts.iter().map(|c| c + 2).collect()
}

/// Renders a complete dataset. Test patients are drawn first so that
/// `test_images` can be honored, then image counts are allocated within
/// each split and labels balanced within each patient.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let size = (config.height, config.width);
    let ids: Vec<u32> = (0..config.patients as u32).collect();
    let patients: Vec<PatientProfile> = ids
        .iter()
        .map(|&id| PatientProfile::draw(config.seed, id, config.confound_strength, size))
        .collect();

    let test = draw_patients(&ids, config.test_patients, config.seed, "split");
    let train: Vec<u32> = ids.iter().copied().filter(|p| !test.contains(p)).collect();
    let test_images = config.test_image_count();
    let mut counts = BTreeMap::new();
    for (group, total, stream_seed) in [
        (&train, config.images - test_images, config.seed),
        (&test, test_images, config.seed ^ 0x7e57),
    ] {
        for (p, c) in group.iter().zip(allocate(total, group, stream_seed)) {
            counts.insert(*p, c);
        }
    }

    let mut samples = Vec::with_capacity(config.images);
    let mut images = Vec::with_capacity(config.images * config.height * config.width);
    for profile in &patients {
        let n = counts[&profile.patient_id];
        // Labels come from their own stream, independent of the profile.
        let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
        let mut label_rng = substream(config.seed, "labels", &[u64::from(profile.patient_id)]);
        if n % 2 == 1 && label_rng.random_bool(0.5) {
            labels[n - 1] = 1;
        }
        labels.shuffle(&mut label_rng);
        for (k, label) in labels.into_iter().enumerate() {
            let mut rng = substream(config.seed, "render", &[u64::from(profile.patient_id), k as u64]);
            let img = render_image(profile, label, size, &mut rng);
            images.extend(img.data().iter().map(|&v| v as f32));
            samples.push(SampleRecord {
                sample_id: samples.len() as u32,
                patient_id: profile.patient_id,
                label,
            });
        }
    }

    let split = ids
        .iter()
        .map(|&p| (p, if test.contains(&p) { SplitRole::Test } else { SplitRole::Train }))
        .collect();
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config: config.clone(),
        patients,
        samples,
        split,
        train_patients: train,
    };
    manifest.validate()?;
    Ok(Dataset { manifest, images })
}

/// Re-splits a manifest: `test_patient_count` patients drawn with `seed` go
/// to test, all others to train, and training patients are re-indexed
/// contiguously in ascending id order.
pub fn split_by_patient(manifest: &DatasetManifest, test_patient_count: usize, seed: u64) -> Result<DatasetManifest> {
    let ids: Vec<u32> = manifest.patients.iter().map(|p| p.patient_id).collect();
    if test_patient_count == 0 || test_patient_count >= ids.len() {
        return Err(Error::Config(format!(
            "test patient count {test_patient_count} must be between 1 and {} (of {} patients)",
            ids.len().saturating_sub(1),
            ids.len()
        )));
    }
    let test = draw_patients(&ids, test_patient_count, seed, "split");
    let mut out = manifest.clone();
    out.split = ids
        .iter()
        .map(|&p| (p, if test.contains(&p) { SplitRole::Test } else { SplitRole::Train }))
        .collect();
    out.train_patients = ids.into_iter().filter(|p| !test.contains(p)).collect();
    Ok(out)
}

/// Reduced-patient regime: keeps `count` training patients (seeded draw),
/// marks the rest unused, leaves the test split alone.
pub fn restrict_train_patients(manifest: &DatasetManifest, count: usize, seed: u64) -> Result<DatasetManifest> {
    let train = manifest.patients_with(SplitRole::Train);
    if count < 2 || count > train.len() {
        return Err(Error::Config(format!(
            "cannot keep {count} of {} training patients",
            train.len()
        )));
    }
    let keep = draw_patients(&train, count, seed, "reduce");
    let mut out = manifest.clone();
    for p in &train {
        if !keep.contains(p) {
            out.split.insert(*p, SplitRole::Unused);
        }
    }
    out.train_patients = keep;
    Ok(out)
}

impl Dataset {
    pub fn with_manifest(&self, manifest: DatasetManifest) -> Result<Self> {
        if manifest.samples != self.manifest.samples {
            return Err(Error::Contract("manifest describes different samples".into()));
        }
        manifest.validate()?;
        Ok(Self {
            manifest,
            images: self.images.clone(),
        })
    }
}
