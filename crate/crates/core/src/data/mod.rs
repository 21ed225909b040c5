//! Synthetic patient-confounded datasets, augmentation and storage.

mod augment;
mod dataset;
mod io;
mod profile;
mod render;

pub use augment::{augment, center_crop, crop, flip_horizontal, flip_vertical, rotate, AugConfig};
pub use dataset::{
    generate_dataset, restrict_train_patients, split_by_patient, Dataset, DatasetManifest, GeneratorConfig,
    SampleRecord, SplitRole, MANIFEST_VERSION,
};
pub use io::{load_dataset, save_dataset, IMAGES_FILE, IMAGES_MAGIC, IMAGES_VERSION, MANIFEST_FILE};
pub use profile::{PatientProfile, NOMINAL_RADIUS, SHARED_TEXTURE_SEED};
pub use render::{plaque_value, render_image, render_with, SampleDraws, PLAQUE_HALF_DEPTH, PLAQUE_OFFSET};
