//! Checkpoint layout:
//!
//! ```text
//! "FTRL1" | u64 LE metadata length | metadata JSON | f64 LE parameters
//! ```
//!
//! Parameters are written in [`Parameterized::params`] order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backbone, BackboneConfig, BackboneError};
use crate::numerics::{Parameterized, Scalar, Tensor};

pub const MAGIC: &[u8; 5] = b"FTRL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: BackboneConfig,
    /// Free-form description of how the weights were produced.
    pub provenance: String,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

fn split_header(bytes: &[u8]) -> Result<(CheckpointMeta, &[u8]), BackboneError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(BackboneError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(BackboneError::Truncated("missing metadata length".into()));
    }
    let len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < len {
        return Err(BackboneError::Truncated(format!(
            "metadata needs {len} bytes, {} available",
            rest.len()
        )));
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(&rest[..len]).map_err(|e| BackboneError::Metadata(e.to_string()))?;
    Ok((meta, &rest[len..]))
}

pub fn read_checkpoint_meta(path: impl AsRef<Path>) -> Result<CheckpointMeta, BackboneError> {
    let bytes = std::fs::read(path)?;
    Ok(split_header(&bytes)?.0)
}

impl<S: Scalar> Backbone<S> {
    pub fn save(
        &self,
        path: impl AsRef<Path>,
        provenance: &str,
        seed: u64,
    ) -> Result<(), BackboneError> {
        let params = self.params();
        let meta = CheckpointMeta {
            config: self.config,
            provenance: provenance.to_string(),
            seed,
            params: params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name().to_string(),
                    shape: p.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&meta).map_err(|e| BackboneError::Metadata(e.to_string()))?;
        let mut buf = Vec::with_capacity(json.len() + 13 + 8 * self.num_parameters());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for p in params {
            for v in p.value.data() {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        file.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackboneError> {
        Ok(Self::load_with_meta(path)?.0)
    }

    /// Loads and checks the stored config against `expected`.
    pub fn load_expecting(
        path: impl AsRef<Path>,
        expected: &BackboneConfig,
    ) -> Result<Self, BackboneError> {
        let bytes = std::fs::read(path)?;
        let (meta, _) = split_header(&bytes)?;
        let diff = meta.config.differences(expected);
        if !diff.is_empty() {
            return Err(BackboneError::ConfigMismatch(format!(
                "stored vs expected: {}",
                diff.join(", ")
            )));
        }
        Ok(Self::from_bytes(&bytes)?.0)
    }

    pub fn load_with_meta(path: impl AsRef<Path>) -> Result<(Self, CheckpointMeta), BackboneError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    fn from_bytes(bytes: &[u8]) -> Result<(Self, CheckpointMeta), BackboneError> {
        let (meta, mut body) = split_header(bytes)?;
        meta.config
            .validate()
            .map_err(|e| BackboneError::Metadata(e.to_string()))?;
        let mut model = Backbone::<S>::new(meta.config, meta.seed);
        {
            let params = model.params_mut();
            if params.len() != meta.params.len() {
                return Err(BackboneError::ConfigMismatch(format!(
                    "{} stored tensors, model has {}",
                    meta.params.len(),
                    params.len()
                )));
            }
            for (p, entry) in params.into_iter().zip(&meta.params) {
                if p.name() != entry.name || p.shape() != entry.shape.as_slice() {
                    return Err(BackboneError::ConfigMismatch(format!(
                        "tensor {} {:?} vs stored {} {:?}",
                        p.name(),
                        p.shape(),
                        entry.name,
                        entry.shape
                    )));
                }
                let n = p.value.len();
                if body.len() < 8 * n {
                    return Err(BackboneError::Truncated(format!(
                        "tensor {} needs {} bytes, {} available",
                        entry.name,
                        8 * n,
                        body.len()
                    )));
                }
                let data = body[..8 * n]
                    .chunks_exact(8)
                    .map(|c| S::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                    .collect();
                p.value = Tensor::new(entry.shape.clone(), data)
                    .map_err(|e| BackboneError::Metadata(format!("tensor {}: {e}", entry.name)))?;
                body = &body[8 * n..];
            }
        }
        if !body.is_empty() {
            return Err(BackboneError::Metadata(format!("{} trailing bytes", body.len())));
        }
        Ok((model, meta))
    }
}
