//! Checkpoint blob format.
//!
//! Layout, in file order:
//!
//! 1. `u64` little-endian: byte length of the JSON manifest.
//! 2. UTF-8 JSON manifest: `{"tensors": [{"name", "shape", "offset",
//!    "length"}, ...]}` where `offset` and `length` are byte positions into
//!    the payload (not the file) and tensors appear in parameter order.
//! 3. Payload: each tensor's values as little-endian `f32`, concatenated.
//!
//! Values are converted from the in-memory `f64` representation to `f32` on
//! save and widened back on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AdError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<ManifestEntry>,
}

pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        let length = (t.numel() * 4) as u64;
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            length,
        });
        offset += length;
    }
    let manifest = serde_json::to_vec(&Manifest { tensors: entries })
        .map_err(|e| AdError::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    for (_, t) in params.iter() {
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let mlen = u64::from_le_bytes(len_buf) as usize;
    let mut mbuf = vec![0u8; mlen];
    r.read_exact(&mut mbuf)?;
    let manifest: Manifest =
        serde_json::from_slice(&mbuf).map_err(|e| AdError::Checkpoint(e.to_string()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut out = ParamSet::new();
    for e in manifest.tensors {
        let numel: usize = e.shape.iter().product();
        if e.length as usize != numel * 4 {
            return Err(AdError::Checkpoint(format!(
                "tensor '{}': length {} does not match shape {:?}",
                e.name, e.length, e.shape
            )));
        }
        let start = e.offset as usize;
        let end = start + e.length as usize;
        if end > payload.len() {
            return Err(AdError::Checkpoint(format!("tensor '{}' exceeds payload", e.name)));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        out.insert(&e.name, Tensor::new(e.shape, data)?);
    }
    Ok(out)
}
