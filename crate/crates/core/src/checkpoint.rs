// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Checkpoint container: `manifest.json` plus `params.bin`.
//!
//! The manifest lists named tensors with their shape, offset and length (in
//! `f64` elements) inside `params.bin`, which is the plain concatenation of
//! all tensors as little-endian IEEE-754 doubles. Network tensors use the
//! layer sizes as shape and the layout of [`Mlp::to_flat`](crate::nn::Mlp::to_flat).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "quditcal-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    /// Free-form string metadata (algorithm, dims, seed, step, ...).
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

/// Ordered named tensors with metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub meta: BTreeMap<String, String>,
    tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("unparsable metadata `{key}`")))
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.push((name.to_string(), shape, data));
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn manifest(&self) -> Manifest {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, shape, data)| {
                let entry = TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                    len: data.len(),
                };
                offset += data.len();
                entry
            })
            .collect();
        Manifest {
            format: FORMAT.to_string(),
            meta: self.meta.clone(),
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let total: usize = self.tensors.iter().map(|(_, _, d)| d.len()).sum();
        let mut out = Vec::with_capacity(total * 8);
        for (_, _, data) in &self.tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_parts(manifest: &Manifest, bytes: &[u8]) -> Result<Self> {
        if manifest.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format `{}`",
                manifest.format
            )));
        }
        if bytes.len() % 8 != 0 {
            return Err(Error::Checkpoint(format!(
                "parameter file length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let expected: usize = manifest.tensors.iter().map(|t| t.len).sum();
        if values.len() != expected {
            return Err(Error::Checkpoint(format!(
                "parameter file holds {} values, manifest declares {expected}",
                values.len()
            )));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for t in &manifest.tensors {
            let end = t.offset.checked_add(t.len).filter(|&e| e <= values.len());
            let Some(end) = end else {
                return Err(Error::Checkpoint(format!("tensor `{}` out of range", t.name)));
            };
            tensors.push((t.name.clone(), t.shape.clone(), values[t.offset..end].to_vec()));
        }
        Ok(Self {
            meta: manifest.meta.clone(),
            tensors,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(dir.join(MANIFEST_FILE), manifest + "\n")?;
        fs::write(dir.join(PARAMS_FILE), self.to_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let bytes = fs::read(dir.join(PARAMS_FILE))?;
        Self::from_parts(&manifest, &bytes)
    }
}
