//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"SPCK" | u32 version | u32 header_len | header (UTF-8 JSON) | tensor data (f32)
//! ```
//!
//! The header holds the network config, training metadata and a tensor
//! directory listing each parameter's name, shape, byte offset (relative to
//! the start of the data section) and byte length, in storage order.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::unet::{param_specs, ModelState, ParamTensor, UNetConfig};

pub const MAGIC: [u8; 4] = *b"SPCK";
pub const FORMAT_VERSION: u32 = 1;

const PREAMBLE: usize = 12;

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub style: String,
    pub seed: u64,
    pub epochs_completed: usize,
    pub steps: u64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: UNetConfig,
    meta: TrainingMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelState<f32>,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn new(model: ModelState<f32>, meta: TrainingMeta) -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            model,
            meta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.model, &self.meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        decode(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.model, &self.meta, path)
    }
}

fn encode(model: &ModelState<f32>, meta: &TrainingMeta) -> Vec<u8> {
    let mut offset = 0u64;
    let tensors = model
        .params()
        .iter()
        .map(|(name, p)| {
            let nbytes = 4 * p.len() as u64;
            let entry = TensorEntry {
                name: name.clone(),
                shape: p.shape.clone(),
                offset,
                nbytes,
            };
            offset += nbytes;
            entry
        })
        .collect();
    let header = Header {
        config: *model.config(),
        meta: meta.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params().values() {
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: bytes[..4].try_into().expect("4 bytes"),
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(CheckpointError::Truncated {
            expected: PREAMBLE as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u32_at(bytes, 8) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(CheckpointError::Truncated {
            expected: data_start as u64,
            found: bytes.len() as u64,
        });
    }
    let header: Header =
        serde_json::from_slice(&bytes[PREAMBLE..data_start]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let specs = param_specs(&header.config);
    if specs.len() != header.tensors.len() {
        return Err(CheckpointError::DirectoryMismatch(format!(
            "config implies {} tensors, directory lists {}",
            specs.len(),
            header.tensors.len()
        )));
    }
    let mut expected_offset = 0u64;
    for ((name, shape), entry) in specs.iter().zip(&header.tensors) {
        let n: usize = shape.iter().product();
        if *name != entry.name || *shape != entry.shape {
            return Err(CheckpointError::DirectoryMismatch(format!(
                "expected {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
        if entry.offset != expected_offset || entry.nbytes != 4 * n as u64 {
            return Err(CheckpointError::DirectoryMismatch(format!(
                "{name}: offset {} and length {} do not match the layout (expected {expected_offset} and {})",
                entry.offset,
                entry.nbytes,
                4 * n
            )));
        }
        expected_offset += entry.nbytes;
    }
    let data = &bytes[data_start..];
    if data.len() as u64 != expected_offset {
        return Err(CheckpointError::Truncated {
            expected: expected_offset,
            found: data.len() as u64,
        });
    }
    let mut params = IndexMap::with_capacity(specs.len());
    for entry in header.tensors {
        let raw = &data[entry.offset as usize..(entry.offset + entry.nbytes) as usize];
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensor = ParamTensor::new(entry.shape, values).map_err(|e| CheckpointError::DirectoryMismatch(e.to_string()))?;
        params.insert(entry.name, tensor);
    }
    let model =
        ModelState::from_params(header.config, params).map_err(|e| CheckpointError::DirectoryMismatch(e.to_string()))?;
    Ok(Checkpoint {
        version,
        model,
        meta: header.meta,
    })
}

pub fn save_checkpoint(model: &ModelState<f32>, meta: &TrainingMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?)
}
