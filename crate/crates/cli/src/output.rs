// SPDX-License-Identifier: MIT OR Apache-2.0

//! Digest-named output directories, JSON writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mdprobe::digest::json_digest;
use mdprobe::{LossSpec, ProbeError, TrainedProber};
use serde::Serialize;

/// Hex characters of the invocation digest used in directory names.
pub const DIR_DIGEST_LEN: usize = 16;

/// `root/<prefix>-<digest of key>`, created if missing.
pub fn digest_dir<T: Serialize>(root: &Path, prefix: &str, key: &T) -> mdprobe::Result<PathBuf> {
    let digest = json_digest(key)?;
    let dir = root.join(format!("{prefix}-{}", &digest[..DIR_DIGEST_LEN]));
    create_dir(&dir)?;
    Ok(dir)
}

pub fn create_dir(dir: &Path) -> mdprobe::Result<()> {
    fs::create_dir_all(dir).map_err(|e| ProbeError::io(dir, e))
}

/// Pretty JSON with a trailing newline; parent directories are created.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> mdprobe::Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| ProbeError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> mdprobe::Result<T> {
    let bytes = fs::read(path).map_err(|e| ProbeError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SeedLoss {
    pub seed: u64,
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SeedLoss {
    pub fn from_runs(runs: &[mdprobe::Result<TrainedProber>], first_seed: u64) -> Vec<SeedLoss> {
        runs.iter()
            .enumerate()
            .map(|(i, r)| match r {
                Ok(t) => SeedLoss {
                    seed: t.seed,
                    final_loss: Some(t.final_train_loss),
                    error: None,
                },
                Err(e) => SeedLoss {
                    seed: first_seed.wrapping_add(i as u64),
                    final_loss: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }
}

/// Written next to every training product. `invocation` holds every setting
/// that affects the numbers, so the run can be repeated from it.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub invocation: serde_json::Value,
    pub loss_spec: Option<LossSpec>,
    pub dataset_digest: String,
    pub per_seed_final_losses: Vec<SeedLoss>,
    pub selected_seed: Option<u64>,
    pub wall_time_secs: f64,
}

/// Starts the wall clock for a manifest.
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Self(Instant::now())
    }

    pub fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Prints `key value` to stdout; commands report their products this way.
pub fn report_line(key: &str, value: impl std::fmt::Display) {
    println!("{key} {value}");
}
