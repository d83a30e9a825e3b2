//! Single-file model container: a JSON header (model kind, configuration,
//! vocabulary, tensor shapes) followed by raw little-endian `f64` tensor data.
//!
//! Layout: `b"SBCK\x01"`, header length as `u64` LE, header bytes, tensors in
//! header order.

use super::tape::ParamStore;
use super::tensor::Mat;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: &[u8; 5] = b"SBCK\x01";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { expected: String, found: String },
    #[error("vocabulary hash mismatch: header says {stored}, vocabulary hashes to {computed}")]
    VocabHashMismatch { stored: String, computed: String },
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| TensorHeader { name: n.clone(), rows: t.rows(), cols: t.cols() })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(13 + header.len() + self.params.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 13 || &bytes[..5] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let hlen = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let body = &bytes[13..];
        if body.len() < hlen {
            return Err(CheckpointError::Malformed("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let mut data = &body[hlen..];
        let mut params = ParamStore::new();
        for t in header.tensors {
            let n = t.rows * t.cols;
            if data.len() < n * 8 {
                return Err(CheckpointError::Malformed(format!("tensor {} truncated", t.name)));
            }
            let values = data[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            data = &data[n * 8..];
            params.add(t.name, Mat::from_vec(t.rows, t.cols, values));
        }
        if !data.is_empty() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Self { kind: header.kind, meta: header.meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, expected: &str) -> Result<(), CheckpointError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(CheckpointError::KindMismatch { expected: expected.into(), found: self.kind.clone() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let mut params = ParamStore::new();
        params.add("a", Mat::from_vec(2, 2, vec![1.0, -2.5, f64::MIN_POSITIVE, 4.0]));
        params.add("b", Mat::zeros(1, 3));
        let ck = Checkpoint { kind: "test".into(), meta: serde_json::json!({"x": 1}), params };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.kind, "test");
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.params, ck.params);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Checkpoint::from_bytes(b"hello world, not a model"), Err(CheckpointError::BadMagic)));
        let mut bytes = Checkpoint {
            kind: "k".into(),
            meta: serde_json::Value::Null,
            params: {
                let mut p = ParamStore::new();
                p.add("a", Mat::zeros(4, 4));
                p
            },
        }
        .to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Malformed(_))));
    }
}
