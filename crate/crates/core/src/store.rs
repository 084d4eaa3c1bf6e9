//! On-disk artifact store: `meta.json` plus binary float payloads.
//!
//! Payload layout: magic `SEMROM01`, `u32` rank, `rank` x `u32` shape, then
//! the values as little-endian `f64` in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SEMROM01";

/// Dense array with an explicit shape (row-major data).
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Dimension(format!("shape {shape:?} does not hold {} values", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: &[f64]) -> Self {
        Self { shape: vec![data.len()], data: data.to_vec() }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        Self { shape: vec![r, c], data: m.transpose().as_slice().to_vec() }
    }

    /// Stack of equally shaped matrices as a rank-3 array.
    pub fn from_matrices(ms: &[DMatrix<f64>], rows: usize, cols: usize) -> Self {
        let mut data = Vec::with_capacity(ms.len() * rows * cols);
        for m in ms {
            data.extend_from_slice(m.transpose().as_slice());
        }
        Self { shape: vec![ms.len(), rows, cols], data }
    }

    pub fn from_vectors(vs: &[DVector<f64>], len: usize) -> Self {
        let mut data = Vec::with_capacity(vs.len() * len);
        for v in vs {
            data.extend_from_slice(v.as_slice());
        }
        Self { shape: vec![vs.len(), len], data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self.shape[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(Error::Store(format!("expected a rank-2 array, got shape {:?}", self.shape))),
        }
    }

    pub fn to_matrices(&self) -> Result<Vec<DMatrix<f64>>> {
        match self.shape[..] {
            [k, r, c] => Ok((0..k).map(|i| DMatrix::from_row_slice(r, c, &self.data[i * r * c..(i + 1) * r * c])).collect()),
            _ => Err(Error::Store(format!("expected a rank-3 array, got shape {:?}", self.shape))),
        }
    }

    pub fn to_vectors(&self) -> Result<Vec<DVector<f64>>> {
        match self.shape[..] {
            [k, n] => Ok((0..k).map(|i| DVector::from_column_slice(&self.data[i * n..(i + 1) * n])).collect()),
            _ => Err(Error::Store(format!("expected a rank-2 array, got shape {:?}", self.shape))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.shape.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &s in &self.shape {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Store(format!("malformed payload: {msg}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let rank = u32_at(8);
        let header = 12 + 4 * rank;
        if bytes.len() < header {
            return Err(bad("truncated header"));
        }
        let shape: Vec<usize> = (0..rank).map(|k| u32_at(12 + 4 * k)).collect();
        let count: usize = shape.iter().product();
        if bytes.len() != header + 8 * count {
            return Err(bad(&format!("shape {shape:?} needs {} data bytes, found {}", 8 * count, bytes.len() - header)));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { shape, data })
    }
}

/// Progress of one offline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Failed { message: String },
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Mesh fingerprint per curvature (keyed by the formatted value).
    pub fingerprints: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageStatus>,
}

/// Directory-backed store. One writer at a time is assumed.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        // write then rename so a crash never leaves a torn file behind
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn write_array(&self, rel: &str, a: &Array) -> Result<()> {
        self.write_bytes(rel, &a.to_bytes())
    }

    pub fn read_array(&self, rel: &str) -> Result<Array> {
        let bytes = fs::read(self.path(rel)).map_err(|e| Error::Store(format!("{rel}: {e}")))?;
        Array::from_bytes(&bytes).map_err(|e| Error::Store(format!("{rel}: {e}")))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_bytes(rel, s.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let s = fs::read_to_string(self.path(rel)).map_err(|e| Error::Store(format!("{rel}: {e}")))?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn read_meta(&self) -> Result<Option<Meta>> {
        if !self.exists("meta.json") {
            return Ok(None);
        }
        self.read_json("meta.json").map(Some)
    }

    pub fn write_meta(&self, meta: &Meta) -> Result<()> {
        self.write_json("meta.json", meta)
    }
}
