//! Binary checkpoint format.
//!
//! Layout: 8-byte magic `HHSAE1\0\0`, a little-endian `u64` header length,
//! a JSON header, then the payload of little-endian `f64` tensors in
//! row-major order. The header records every tensor's shape and byte offset
//! and a CRC32 of the payload.

use std::path::Path;

use hhsae_core::model::{ModelDims, ModelParams, ParamId};
use hhsae_core::numerics::AdamState;
use hhsae_core::trainer::{OptimizerState, TrainConfig};
use hhsae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"HHSAE1\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dims: ModelDims,
    train_config: Option<TrainConfig>,
    optimizer_steps: Option<Vec<u64>>,
    tensors: Vec<TensorEntry>,
    payload_len: u64,
    payload_crc32: u32,
}

fn tensors(ck: &Checkpoint) -> Vec<(String, &Matrix)> {
    let mut out: Vec<(String, &Matrix)> = ParamId::ALL
        .iter()
        .map(|&id| (id.name().to_string(), ck.params.tensor(id)))
        .collect();
    if let Some(opt) = &ck.optimizer {
        for (id, s) in ParamId::ALL.iter().zip(&opt.states) {
            out.push((format!("adam_m.{}", id.name()), &s.m));
            out.push((format!("adam_v.{}", id.name()), &s.v));
        }
    }
    out
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    for (name, m) in tensors(ck) {
        entries.push(TensorEntry {
            name,
            rows: m.rows(),
            cols: m.cols(),
            offset: payload.len() as u64,
        });
        for v in m.as_slice() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        dims: ck.params.dims,
        train_config: ck.train_config.clone(),
        optimizer_steps: ck
            .optimizer
            .as_ref()
            .map(|o| o.states.iter().map(|s| s.step).collect()),
        tensors: entries,
        payload_len: payload.len() as u64,
        payload_crc32: crc32fast::hash(&payload),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |m: String| CliError::format("checkpoint", path, m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not an HHSAE checkpoint (bad magic)".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let payload = &bytes[header_end..];
    if (payload.len() as u64) < header.payload_len {
        return Err(bad(format!(
            "truncated payload: {} of {} bytes",
            payload.len(),
            header.payload_len
        )));
    }
    if payload.len() as u64 > header.payload_len {
        return Err(bad("trailing bytes after payload".into()));
    }
    if crc32fast::hash(payload) != header.payload_crc32 {
        return Err(bad("payload checksum mismatch".into()));
    }
    let read = |e: &TensorEntry| -> Result<Matrix> {
        let start = e.offset as usize;
        let end = e
            .rows
            .checked_mul(e.cols)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(start))
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| bad(format!("tensor {} exceeds payload", e.name)))?;
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Matrix::from_vec(e.rows, e.cols, data)?)
    };
    let find = |name: &str| -> Result<Matrix> {
        let e = header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        read(e)
    };

    let mut params = ModelParams::zeros(header.dims);
    for id in ParamId::ALL {
        let m = find(id.name())?;
        if m.shape() != params.tensor(id).shape() {
            return Err(bad(format!(
                "tensor {} is {:?}, dims require {:?}",
                id.name(),
                m.shape(),
                params.tensor(id).shape()
            )));
        }
        *params.tensor_mut(id) = m;
    }
    params.validate().map_err(|e| bad(e.to_string()))?;

    let optimizer = match &header.optimizer_steps {
        None => None,
        Some(steps) => {
            if steps.len() != ParamId::ALL.len() {
                return Err(bad("optimizer step count does not match tensors".into()));
            }
            let mut states = Vec::new();
            for (id, &step) in ParamId::ALL.iter().zip(steps) {
                let m = find(&format!("adam_m.{}", id.name()))?;
                let v = find(&format!("adam_v.{}", id.name()))?;
                if m.shape() != params.tensor(*id).shape() || v.shape() != m.shape() {
                    return Err(bad(format!("optimizer moments for {} have the wrong shape", id.name())));
                }
                states.push(AdamState { m, v, step });
            }
            Some(OptimizerState { states })
        }
    };
    Ok(Checkpoint {
        params,
        optimizer,
        train_config: header.train_config,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ck)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            hint: "run `hhsae train` first".into(),
        });
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}
