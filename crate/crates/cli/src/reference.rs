// SPDX-License-Identifier: MIT OR Apache-2.0

//! CCS reference ensembles on disk, and the digest-keyed cache the pipeline
//! uses so the ensemble trains once per prepared train split.

use std::fs;
use std::path::{Path, PathBuf};

use mdprobe::digest::{json_digest, sha256_hex};
use mdprobe::trainer::train_ccs_reference;
use mdprobe::{ContrastActivationSet, Direction, ProbeError, ProberRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::output::{create_dir, DIR_DIGEST_LEN};

pub const REFERENCE_FILE: &str = "reference.json";
pub const REFERENCE_DIGEST_FILE: &str = "reference.sha256";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEnsemble {
    /// Digest of the normalized train split the ensemble was fit on.
    pub train_digest: String,
    pub train_config: TrainConfig,
    pub probers: Vec<ProberRecord>,
}

impl ReferenceEnsemble {
    pub fn train(set: &ContrastActivationSet, config: &TrainConfig, k: usize) -> mdprobe::Result<Self> {
        let runs = train_ccs_reference(set, config, k)?;
        Ok(Self {
            train_digest: set.digest(),
            train_config: *config,
            probers: runs.iter().map(|r| r.record()).collect(),
        })
    }

    pub fn directions(&self) -> mdprobe::Result<Vec<Direction>> {
        self.probers.iter().map(|r| r.prober()?.direction()).collect()
    }

    /// Fails unless the ensemble was fit on exactly `set`.
    pub fn check_matches(&self, set: &ContrastActivationSet) -> mdprobe::Result<()> {
        let actual = set.digest();
        if self.train_digest != actual {
            return Err(ProbeError::DigestMismatch {
                what: "reference ensemble train split".into(),
                expected: self.train_digest.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Writes the JSON and a SHA-256 of its bytes.
    pub fn save(&self, dir: &Path) -> mdprobe::Result<()> {
        create_dir(dir)?;
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        let json_path = dir.join(REFERENCE_FILE);
        fs::write(&json_path, &bytes).map_err(|e| ProbeError::io(&json_path, e))?;
        let sha_path = dir.join(REFERENCE_DIGEST_FILE);
        fs::write(&sha_path, format!("{}\n", sha256_hex(&bytes))).map_err(|e| ProbeError::io(&sha_path, e))
    }

    /// Loads and checks the stored digest before parsing.
    pub fn load(dir: &Path) -> mdprobe::Result<Self> {
        let json_path = dir.join(REFERENCE_FILE);
        let sha_path = dir.join(REFERENCE_DIGEST_FILE);
        let bytes = fs::read(&json_path).map_err(|e| ProbeError::io(&json_path, e))?;
        let stored = fs::read_to_string(&sha_path).map_err(|e| ProbeError::io(&sha_path, e))?;
        let actual = sha256_hex(&bytes);
        if stored.trim() != actual {
            return Err(ProbeError::DigestMismatch {
                what: json_path.display().to_string(),
                expected: stored.trim().to_string(),
                actual,
            });
        }
        let ensemble: Self = serde_json::from_slice(&bytes)?;
        if ensemble.probers.len() < 2 {
            return Err(ProbeError::validation("reference ensemble holds fewer than 2 probers"));
        }
        for p in &ensemble.probers {
            p.prober()?;
        }
        Ok(ensemble)
    }
}

/// Where a cached ensemble lives and whether it was reused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheEntry {
    pub key: String,
    pub dir: PathBuf,
    pub hit: bool,
}

#[derive(Serialize)]
struct CacheKey<'a> {
    train_digest: &'a str,
    train_config: &'a TrainConfig,
    k: usize,
}

/// Loads the ensemble for `(set, config, k)` from `cache_root`, training and
/// storing it on a miss. A cached entry that fails its digest check is an
/// error, not a silent retrain.
pub fn cached_reference(
    cache_root: &Path,
    set: &ContrastActivationSet,
    config: &TrainConfig,
    k: usize,
) -> mdprobe::Result<(ReferenceEnsemble, CacheEntry)> {
    let train_digest = set.digest();
    let key = json_digest(&CacheKey {
        train_digest: &train_digest,
        train_config: config,
        k,
    })?;
    let dir = cache_root.join(format!("ccs-{}", &key[..DIR_DIGEST_LEN]));
    if dir.join(REFERENCE_FILE).exists() {
        let ensemble = ReferenceEnsemble::load(&dir)?;
        ensemble.check_matches(set)?;
        if ensemble.train_config != *config || ensemble.probers.len() != k {
            return Err(ProbeError::DigestMismatch {
                what: format!("cached reference settings in {}", dir.display()),
                expected: key,
                actual: json_digest(&(&ensemble.train_config, ensemble.probers.len()))?,
            });
        }
        return Ok((ensemble, CacheEntry { key, dir, hit: true }));
    }

    let ensemble = ReferenceEnsemble::train(set, config, k)?;
    // Write to a sibling and rename so an interrupted run never leaves a
    // half-written entry behind.
    create_dir(cache_root)?;
    let tmp = cache_root.join(format!(".tmp-ccs-{}-{}", &key[..DIR_DIGEST_LEN], std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| ProbeError::io(&tmp, e))?;
    }
    ensemble.save(&tmp)?;
    if let Err(e) = fs::rename(&tmp, &dir) {
        // Another process may have won the race; its entry is equivalent.
        let _ = fs::remove_dir_all(&tmp);
        if !dir.join(REFERENCE_FILE).exists() {
            return Err(ProbeError::io(&dir, e));
        }
    }
    Ok((ensemble, CacheEntry { key, dir, hit: false }))
}
