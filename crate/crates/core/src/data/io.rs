//! On-disk dataset layout: `manifest.json` plus `images.bin`.
//!
//! `images.bin` is a 24-byte little-endian header (`ADVRIMG\0`, format
//! version `u32`, image count `u32`, height `u32`, width `u32`) followed by
//! the images as contiguous `f32` records in `sample_id` order.

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, DatasetManifest, MANIFEST_VERSION};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: &[u8; 8] = b"ADVRIMG\0";
pub const IMAGES_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_FILE: &str = "images.bin";
const HEADER_LEN: usize = 24;

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| Error::corrupt(&manifest_path, e.to_string()))?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    let (h, w) = dataset.image_size();
    let count = dataset.manifest.samples.len();
    let mut bytes = Vec::with_capacity(HEADER_LEN + dataset.images.len() * 4);
    bytes.extend_from_slice(IMAGES_MAGIC);
    for v in [IMAGES_VERSION, count as u32, h as u32, w as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in &dataset.images {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let images_path = dir.join(IMAGES_FILE);
    fs::write(&images_path, bytes).map_err(|e| Error::io(&images_path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::corrupt(&manifest_path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Version {
            path: manifest_path,
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    manifest
        .validate()
        .map_err(|e| Error::corrupt(&manifest_path, e.to_string()))?;

    let images_path = dir.join(IMAGES_FILE);
    let bytes = fs::read(&images_path).map_err(|e| Error::io(&images_path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != IMAGES_MAGIC {
        return Err(Error::corrupt(&images_path, "missing image blob header"));
    }
    let version = read_u32(&bytes, 8);
    if version != IMAGES_VERSION {
        return Err(Error::Version {
            path: images_path,
            found: version,
            expected: IMAGES_VERSION,
        });
    }
    let (count, h, w) = (
        read_u32(&bytes, 12) as usize,
        read_u32(&bytes, 16) as usize,
        read_u32(&bytes, 20) as usize,
    );
    if count != manifest.samples.len() || h != manifest.config.height || w != manifest.config.width {
        return Err(Error::corrupt(
            &images_path,
            format!(
                "header describes {count} images of {h}x{w}, manifest has {} of {}x{}",
                manifest.samples.len(),
                manifest.config.height,
                manifest.config.width
            ),
        ));
    }
    let expected = HEADER_LEN + count * h * w * 4;
    if bytes.len() != expected {
        return Err(Error::corrupt(
            &images_path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let images = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Dataset { manifest, images })
}
