//! Weight file format.
//!
//! ```text
//! "IYW8"                 4 bytes magic
//! version                u32 little-endian
//! header_len             u64 little-endian
//! header                 header_len bytes of UTF-8 JSON:
//!                        {"config": {...}, "tensors": [{"name", "dims", "offset"}, ...]}
//! payload                little-endian f32 values, tensors back to back;
//!                        `offset` is the byte offset into the payload
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::graph::Graph;
use super::weights::ModelWeights;

pub const MAGIC: &[u8; 4] = b"IYW8";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    dims: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
}

pub fn encode_weights(config: &ModelConfig, weights: &ModelWeights) -> Vec<u8> {
    let mut offset = 0u64;
    let tensors = weights
        .iter()
        .map(|(name, t)| {
            let rec = TensorRecord {
                name: name.to_string(),
                dims: t.dims().to_vec(),
                offset,
            };
            offset += 4 * t.len() as u64;
            rec
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: config.clone(),
        tensors,
    })
    .expect("header serializes");

    let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in weights.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a weight file and checks every tensor against the graph its own
/// config describes.
pub fn decode_weights(bytes: &[u8]) -> Result<(ModelConfig, ModelWeights)> {
    let bad = |msg: String| Error::WeightFile(msg);
    if bytes.len() < 16 {
        return Err(bad(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}, expected {VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = 16usize
        .checked_add(usize::try_from(header_len).map_err(|_| bad("header too large".into()))?)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| bad(format!("header: {e}")))?;
    header.config.validate()?;

    let payload = &bytes[header_end..];
    let mut weights = ModelWeights::new();
    let mut expected_offset = 0u64;
    for rec in &header.tensors {
        if rec.offset != expected_offset {
            return Err(bad(format!(
                "tensor `{}` at offset {}, expected {expected_offset}",
                rec.name, rec.offset
            )));
        }
        let numel: usize = rec.dims.iter().product();
        let start = rec.offset as usize;
        let end = start + 4 * numel;
        if end > payload.len() {
            return Err(bad(format!(
                "truncated payload: tensor `{}` needs bytes {start}..{end}, payload has {}",
                rec.name,
                payload.len()
            )));
        }
        let data = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(rec.dims.clone(), data)
            .map_err(|e| bad(format!("tensor `{}`: {e}", rec.name)))?;
        if weights.insert(rec.name.clone(), t).is_some() {
            return Err(bad(format!("duplicate tensor `{}`", rec.name)));
        }
        expected_offset = end as u64;
    }
    if expected_offset as usize != payload.len() {
        return Err(bad(format!(
            "payload is {} bytes but header describes {expected_offset}",
            payload.len()
        )));
    }
    Graph::new(&header.config)?.check_weights(&weights)?;
    Ok((header.config, weights))
}

pub fn save_weights(config: &ModelConfig, weights: &ModelWeights, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode_weights(config, weights))
}

pub fn load_weights(path: &Path) -> Result<(ModelConfig, ModelWeights)> {
    decode_weights(&fsutil::read(path)?)
}
