//! Checkpoint container.
//!
//! Layout (little-endian): magic `ADVRCKPT`, format version `u32`, header
//! length `u64`, a JSON header (metadata plus a tensor index of name, shape
//! and element offset), then every tensor as contiguous `f64` values in
//! index order. Identical states serialize to identical bytes.

use std::fs;
use std::path::Path;

use advreg_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::{Group, Mode, NormLayer, Param, TwoHeadNet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADVRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub model: ModelConfig,
    pub seed: u64,
    pub mode: Mode,
    /// Free-form run metadata (scenario, optimizer timesteps, ...).
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<IndexEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    tensors: Vec<(String, Tensor)>,
}

fn param_key(name: &str) -> String {
    format!("param.{name}")
}

fn norm_key(name: &str, stat: &str) -> String {
    format!("norm.{name}.{stat}")
}

impl Checkpoint {
    pub fn from_net(net: &TwoHeadNet) -> Self {
        let mut tensors = Vec::new();
        for g in Group::ALL {
            for p in net.params(g) {
                tensors.push((param_key(&p.name), p.value.clone()));
            }
        }
        for n in net.norms() {
            let len = n.running_mean.len();
            for (stat, v) in [("running_mean", &n.running_mean), ("running_var", &n.running_var)] {
                tensors.push((norm_key(&n.name, stat), Tensor::new(vec![len], v.clone()).expect("norm shape")));
            }
        }
        Self {
            meta: CheckpointMeta {
                format_version: CHECKPOINT_VERSION,
                model: net.config().clone(),
                seed: net.seed(),
                mode: net.mode(),
                extra: serde_json::Value::Null,
            },
            tensors,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_net(&self) -> Result<TwoHeadNet> {
        let template = TwoHeadNet::build(self.meta.model.clone(), self.meta.seed)?;
        let missing = |key: String| Error::Contract(format!("checkpoint lacks tensor {key}"));
        let mut groups: [Vec<Param>; 3] = Default::default();
        for (slot, g) in groups.iter_mut().zip(Group::ALL) {
            for p in template.params(g) {
                let key = param_key(&p.name);
                let value = self.tensor(&key).ok_or_else(|| missing(key.clone()))?.clone();
                slot.push(Param {
                    name: p.name.clone(),
                    value,
                });
            }
        }
        let mut norms = Vec::new();
        for n in template.norms() {
            let get = |stat: &str| -> Result<Vec<f64>> {
                let key = norm_key(&n.name, stat);
                Ok(self.tensor(&key).ok_or_else(|| missing(key.clone()))?.data().to_vec())
            };
            norms.push(NormLayer {
                name: n.name.clone(),
                running_mean: get("running_mean")?,
                running_var: get("running_var")?,
            });
        }
        TwoHeadNet::from_parts(self.meta.model.clone(), self.meta.seed, self.meta.mode, groups, norms)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let index = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = IndexEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let header = Header {
            meta: self.meta.clone(),
            tensors: index,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + offset * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::corrupt(path, "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = 20usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::corrupt(path, "truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..body]).map_err(|e| Error::corrupt(path, e.to_string()))?;
        let data = &bytes[body..];
        let total: usize = header.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if data.len() != total * 8 {
            return Err(Error::corrupt(
                path,
                format!("expected {} tensor bytes, found {}", total * 8, data.len()),
            ));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset * 8;
            let values = data
                .get(start..start + n * 8)
                .ok_or_else(|| Error::corrupt(path, format!("tensor {} out of bounds", e.name)))?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(e.shape, values).map_err(|err| Error::corrupt(path, err.to_string()))?;
            tensors.push((e.name, t));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
