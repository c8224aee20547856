//! Binary checkpoint container.
//!
//! Layout: magic "MGCD", format version (u32 LE), a UTF-8 JSON header
//! mapping each tensor name to `{shape, dtype, byte_offset}`, then the raw
//! little-endian float payloads. Offsets are relative to the end of the
//! header; names are written in sorted order and payloads packed in the
//! same order, so saving the same tensors always produces identical bytes.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scalar::Scalar;
use super::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGCD";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic (not a checkpoint container)")]
    BadMagic { path: String },
    #[error("{path}: unsupported format version {found}")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: malformed header: {message}")]
    BadHeader { path: String, message: String },
    #[error("{path}: tensor {name:?} has dtype {found}, expected {expected}")]
    DtypeMismatch {
        path: String,
        name: String,
        found: String,
        expected: String,
    },
    #[error("{path}: tensor {name:?} payload out of bounds")]
    PayloadBounds { path: String, name: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    shape: Vec<usize>,
    dtype: String,
    byte_offset: u64,
}

/// Serialize named tensors to the container format.
pub fn save_tensors<S: Scalar>(
    path: &Path,
    tensors: &BTreeMap<String, Tensor<S>>,
) -> Result<(), CheckpointError> {
    let mut header: BTreeMap<&str, HeaderEntry> = BTreeMap::new();
    let mut offset = 0u64;
    for (name, tensor) in tensors {
        header.insert(
            name,
            HeaderEntry {
                shape: tensor.shape().to_vec(),
                dtype: S::DTYPE.to_string(),
                byte_offset: offset,
            },
        );
        offset += (tensor.numel() * S::BYTES) as u64;
    }
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut bytes = Vec::with_capacity(8 + header_json.len() + offset as usize);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for tensor in tensors.values() {
        for &v in tensor.data() {
            v.write_le(&mut bytes);
        }
    }
    std::fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load named tensors; every tensor must match the element type `S`.
pub fn load_tensors<S: Scalar>(path: &Path) -> Result<BTreeMap<String, Tensor<S>>, CheckpointError> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: display.clone(),
        source,
    })?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic { path: display });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion {
            path: display,
            found: version,
        });
    }

    // The header is exactly one JSON value; find its end by streaming.
    let mut stream =
        serde_json::Deserializer::from_slice(&bytes[8..]).into_iter::<BTreeMap<String, HeaderEntry>>();
    let header = match stream.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(CheckpointError::BadHeader {
                path: display,
                message: e.to_string(),
            })
        }
        None => {
            return Err(CheckpointError::BadHeader {
                path: display,
                message: "missing header".to_string(),
            })
        }
    };
    let payload = &bytes[8 + stream.byte_offset()..];

    let mut tensors = BTreeMap::new();
    for (name, entry) in header {
        if entry.dtype != S::DTYPE {
            return Err(CheckpointError::DtypeMismatch {
                path: display,
                name,
                found: entry.dtype,
                expected: S::DTYPE.to_string(),
            });
        }
        let numel: usize = entry.shape.iter().product();
        let start = entry.byte_offset as usize;
        let end = start + numel * S::BYTES;
        if end > payload.len() {
            return Err(CheckpointError::PayloadBounds {
                path: display,
                name,
            });
        }
        let mut data = Vec::with_capacity(numel);
        let mut cursor = &payload[start..end];
        let mut buf = vec![0u8; S::BYTES];
        for _ in 0..numel {
            cursor.read_exact(&mut buf).expect("length checked");
            data.push(S::read_le(&buf));
        }
        tensors.insert(name, Tensor::from_vec(&entry.shape, data));
    }
    Ok(tensors)
}
