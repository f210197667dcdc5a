//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..8    magic  "REVLMCK\0"
//! bytes 8..12   u32    format version (currently 1)
//! bytes 12..20  u64    header length N
//! next N bytes         UTF-8 JSON header
//! remainder            tensor payloads, f64 LE, in header order
//! ```
//!
//! The header is `{"kind", "version", "gate_order", "meta", "tensors":
//! [{"name", "rows", "cols"}]}`. Every tensor is row-major `rows × cols`
//! binary64; LSTM tensors stack their gates in `i, f, g, o` order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::lstm::GATE_ORDER;
use super::params::{Params, TensorView};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"REVLMCK\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
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
    version: u32,
    gate_order: String,
    meta: Value,
    tensors: Vec<TensorHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, meta: Value) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: TensorView<'_>) {
        self.tensors.push(Tensor {
            name: name.into(),
            rows: t.rows,
            cols: t.cols,
            data: t.data.to_vec(),
        });
    }

    /// Adds every tensor of `params` under `prefix.`.
    pub fn push_params<P: Params>(&mut self, prefix: &str, params: &P) {
        for (name, t) in params.tensors() {
            self.push(format!("{prefix}.{name}"), t);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Fetches `name` and checks its shape.
    pub fn tensor(&self, name: &str, rows: usize, cols: usize) -> Result<&[f64]> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::Data(format!("checkpoint has no tensor {name:?}")))?;
        if t.rows != rows || t.cols != cols {
            return Err(Error::Data(format!(
                "tensor {name:?} is {}x{}, expected {rows}x{cols}",
                t.rows, t.cols
            )));
        }
        Ok(&t.data)
    }

    /// Overwrites every tensor of `params` from `prefix.` entries.
    pub fn fill_params<P: Params>(&self, prefix: &str, params: &mut P) -> Result<()> {
        let shapes: Vec<(String, usize, usize)> = params
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.rows, t.cols))
            .collect();
        for ((name, rows, cols), dst) in shapes.into_iter().zip(params.tensors_mut()) {
            dst.copy_from_slice(self.tensor(&format!("{prefix}.{name}"), rows, cols)?);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            version: VERSION,
            gate_order: GATE_ORDER.to_string(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorHeader {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::parse(origin, 0, msg);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes
            .get(20..20 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.gate_order != GATE_ORDER {
            return Err(bad(&format!("unsupported gate order {}", header.gate_order)));
        }
        let mut off = 20 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n = th.rows * th.cols;
            let raw = bytes
                .get(off..off + 8 * n)
                .ok_or_else(|| bad(&format!("truncated tensor {}", th.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += 8 * n;
            tensors.push(Tensor {
                name: th.name,
                rows: th.rows,
                cols: th.cols,
                data,
            });
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Checkpoint {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Fails unless the checkpoint holds a model of `kind`.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Data(format!(
                "checkpoint holds a {:?} model, expected {kind:?}",
                self.kind
            )));
        }
        Ok(())
    }
}
