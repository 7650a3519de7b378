//! Binary checkpoint format.
//!
//! Layout: magic `ADMC`, little-endian `u32` version, little-endian `u32`
//! header length, JSON header, then every tensor as little-endian `f64` in
//! manifest order.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{init_params, ModelParams, NetConfig};
use crate::error::{CheckpointError, Error, Result};
use crate::features::FeatureSchema;
use crate::pricegrid::PriceGrid;
use crate::trainer::ParamSet;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ADMC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Byte offset into the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_fingerprint: String,
    grid: PriceGrid,
    netconfig: NetConfig,
    schema: FeatureSchema,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let named = params.tensors.named(&params.schema);
    let mut offset = 0;
    let mut manifest = Vec::with_capacity(named.len());
    for (name, m) in &named {
        manifest.push(TensorEntry {
            name: name.clone(),
            shape: [m.rows, m.cols],
            offset,
        });
        offset += m.data.len() * 8;
    }
    let header = Header {
        schema_fingerprint: params.schema.fingerprint(),
        grid: params.grid,
        netconfig: params.net,
        schema: (*params.schema).clone(),
        tensors: manifest,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header_bytes.len())
        .map_err(|_| Error::logic("checkpoint header exceeds 4 GiB"))?;
    let mut out = Vec::with_capacity(12 + header_bytes.len() + offset);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, m) in &named {
        for v in &m.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    bytes
        .get(at..at + len)
        .ok_or_else(|| CheckpointError::Truncated(format!("missing {what}")).into())
}

pub fn read_checkpoint_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = u32::from_le_bytes(take(bytes, 4, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        }
        .into());
    }
    let header_len = u32::from_le_bytes(take(bytes, 8, 4, "header length")?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(bytes, 12, header_len, "header")?)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.schema.fingerprint() != header.schema_fingerprint {
        return Err(CheckpointError::Header("embedded schema does not match its fingerprint".into()).into());
    }
    let data = &bytes[12 + header_len..];

    // rebuild the shapes from the configuration, then overwrite
    let schema = Arc::new(header.schema);
    let mut params = init_params(Arc::clone(&schema), header.grid, header.netconfig, 0)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let expected: Vec<(String, [usize; 2])> = params
        .tensors
        .named(&schema)
        .into_iter()
        .map(|(n, m)| (n, [m.rows, m.cols]))
        .collect();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), e)| n != &e.name || s != &e.shape)
    {
        return Err(CheckpointError::Header("tensor manifest does not match the network".into()).into());
    }
    let total: usize = header.tensors.iter().map(|e| e.shape[0] * e.shape[1] * 8).sum();
    if data.len() < total {
        return Err(CheckpointError::Truncated(format!(
            "expected {total} data bytes, found {}",
            data.len()
        ))
        .into());
    }
    if data.len() > total {
        return Err(CheckpointError::Header("trailing bytes after tensor data".into()).into());
    }
    for (slice, entry) in params.tensors.slices_mut().into_iter().zip(&header.tensors) {
        let raw = take(data, entry.offset, slice.len() * 8, &entry.name)?;
        for (v, chunk) in slice.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if !params.tensors.all_finite() {
        return Err(Error::numeric("checkpoint", "non-finite parameter"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint_bytes(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    read_checkpoint_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and checks it was trained under `schema`.
pub fn load_checkpoint_for(path: &Path, schema: &FeatureSchema) -> Result<ModelParams> {
    let params = load_checkpoint(path)?;
    let (have, want) = (params.schema.fingerprint(), schema.fingerprint());
    if have != want {
        return Err(CheckpointError::Fingerprint {
            checkpoint: have,
            dataset: want,
        }
        .into());
    }
    Ok(params)
}
