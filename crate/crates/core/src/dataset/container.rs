// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk activation container.
//!
//! A directory holding `manifest.json` plus raw blobs:
//!
//! - `phi_plus.bin`, `phi_minus.bin`: row-major little-endian `f32`, exactly
//!   `n * d * 4` bytes each.
//! - `labels.bin` (when `labels_present`): `n` bytes, each 0 or 1.
//! - `truth_direction.bin`, `nuisance_direction.bin` (optional, synthetic
//!   only): `d * 4` bytes each.
//!
//! Values are widened to `f64` on load, so `load` after `save` reproduces
//! every stored `f32` bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind as IoErrorKind;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ContrastActivationSet;
use crate::digest::sha256_hex;
use crate::error::{ProbeError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PHI_PLUS_FILE: &str = "phi_plus.bin";
pub const PHI_MINUS_FILE: &str = "phi_minus.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const TRUTH_DIRECTION_FILE: &str = "truth_direction.bin";
pub const NUISANCE_DIRECTION_FILE: &str = "nuisance_direction.bin";

pub const CONTAINER_VERSION: u32 = 1;
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub dtype: String,
    pub normalized: bool,
    pub labels_present: bool,
    pub meta: BTreeMap<String, String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == IoErrorKind::NotFound {
            ProbeError::MissingBlob(path.to_path_buf())
        } else {
            ProbeError::io(path, e)
        }
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| ProbeError::io(path, e))
}

fn encode_f32(values: impl Iterator<Item = f64>, what: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (index, x) in values.enumerate() {
        let y = x as f32;
        if !y.is_finite() {
            return Err(ProbeError::NonFinite {
                what: what.into(),
                index,
            });
        }
        out.extend_from_slice(&y.to_le_bytes());
    }
    Ok(out)
}

fn decode_f32(bytes: &[u8], name: &str, expected_len: usize) -> Result<Vec<f64>> {
    let expected = expected_len as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(ProbeError::ShapeMismatch {
            name: name.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if let Some(index) = values.iter().position(|x| !x.is_finite()) {
        return Err(ProbeError::NonFinite {
            what: name.into(),
            index,
        });
    }
    Ok(values)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read_file(&path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| ProbeError::CorruptManifest(e.to_string()))?;
    if manifest.version != CONTAINER_VERSION {
        return Err(ProbeError::CorruptManifest(format!(
            "unsupported version {}",
            manifest.version
        )));
    }
    if manifest.dtype != DTYPE_F32LE {
        return Err(ProbeError::CorruptManifest(format!(
            "unsupported dtype {:?}",
            manifest.dtype
        )));
    }
    if manifest.n == 0 || manifest.d == 0 {
        return Err(ProbeError::validation(format!(
            "manifest declares n={}, d={}",
            manifest.n, manifest.d
        )));
    }
    Ok(manifest)
}

pub fn load(dir: impl AsRef<Path>) -> Result<ContrastActivationSet> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let (n, d) = (manifest.n, manifest.d);
    let matrix = |file: &str| -> Result<Array2<f64>> {
        let values = decode_f32(&read_file(&dir.join(file))?, file, n * d)?;
        Ok(Array2::from_shape_vec((n, d), values).expect("length checked against n*d"))
    };
    let phi_plus = matrix(PHI_PLUS_FILE)?;
    let phi_minus = matrix(PHI_MINUS_FILE)?;
    let labels = if manifest.labels_present {
        let bytes = read_file(&dir.join(LABELS_FILE))?;
        if bytes.len() != n {
            return Err(ProbeError::ShapeMismatch {
                name: LABELS_FILE.into(),
                expected: n as u64,
                actual: bytes.len() as u64,
            });
        }
        Some(bytes)
    } else {
        None
    };
    let mut set = ContrastActivationSet::new(phi_plus, phi_minus, labels)?.with_meta(manifest.meta);
    set.set_normalized(manifest.normalized);
    Ok(set)
}

pub fn save(set: &ContrastActivationSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    set.validate()?;
    let plus = encode_f32(set.phi_plus().iter().copied(), PHI_PLUS_FILE)?;
    let minus = encode_f32(set.phi_minus().iter().copied(), PHI_MINUS_FILE)?;
    fs::create_dir_all(dir).map_err(|e| ProbeError::io(dir, e))?;
    write_file(&dir.join(PHI_PLUS_FILE), &plus)?;
    write_file(&dir.join(PHI_MINUS_FILE), &minus)?;
    let labels_path = dir.join(LABELS_FILE);
    match set.labels() {
        Some(labels) => write_file(&labels_path, labels)?,
        None => match fs::remove_file(&labels_path) {
            Ok(()) => {}
            Err(e) if e.kind() == IoErrorKind::NotFound => {}
            Err(e) => return Err(ProbeError::io(labels_path, e)),
        },
    }
    let manifest = Manifest {
        version: CONTAINER_VERSION,
        n: set.n(),
        d: set.d(),
        dtype: DTYPE_F32LE.into(),
        normalized: set.is_normalized(),
        labels_present: set.labels().is_some(),
        meta: set.meta().clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_file(&dir.join(MANIFEST_FILE), &json)
}

pub fn save_direction(dir: impl AsRef<Path>, file: &str, direction: &Array1<f64>) -> Result<()> {
    let dir = dir.as_ref();
    let bytes = encode_f32(direction.iter().copied(), file)?;
    fs::create_dir_all(dir).map_err(|e| ProbeError::io(dir, e))?;
    write_file(&dir.join(file), &bytes)
}

/// Reads a `d * 4` byte direction blob; `d` comes from the manifest.
pub fn load_direction(dir: impl AsRef<Path>, file: &str) -> Result<Array1<f64>> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let values = decode_f32(&read_file(&dir.join(file))?, file, manifest.d)?;
    Ok(Array1::from(values))
}

/// SHA-256 over the manifest and data blobs in a fixed order.
pub fn container_digest(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut bytes = read_file(&dir.join(MANIFEST_FILE))?;
    bytes.extend(read_file(&dir.join(PHI_PLUS_FILE))?);
    bytes.extend(read_file(&dir.join(PHI_MINUS_FILE))?);
    if manifest.labels_present {
        bytes.extend(read_file(&dir.join(LABELS_FILE))?);
    }
    Ok(sha256_hex(&bytes))
}
