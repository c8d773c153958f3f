// SPDX-License-Identifier: MIT OR Apache-2.0

//! Contrast-pair activation sets: validation, per-set normalization,
//! train/test splitting, synthetic generation and on-disk containers.

pub mod container;
pub mod synthetic;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{ProbeError, Result};

/// Standard deviations below this are treated as zero and the coordinate is
/// only centered.
pub const STD_FLOOR: f64 = 1e-8;

/// Paired activations `phi_plus[i]`, `phi_minus[i]` for `n` contrast pairs of
/// dimension `d`, with optional ground-truth labels (1 = "yes" is true).
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastActivationSet {
    phi_plus: Array2<f64>,
    phi_minus: Array2<f64>,
    labels: Option<Vec<u8>>,
    meta: BTreeMap<String, String>,
    normalized: bool,
}

impl ContrastActivationSet {
    pub fn new(
        phi_plus: Array2<f64>,
        phi_minus: Array2<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let set = Self {
            phi_plus,
            phi_minus,
            labels,
            meta: BTreeMap::new(),
            normalized: false,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_meta(mut self, meta: BTreeMap<String, String>) -> Self {
        self.meta = meta;
        self
    }

    pub fn insert_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    /// Flags the set as already normalized, e.g. for activations that were
    /// standardized upstream.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    pub(crate) fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.phi_plus.dim();
        if self.phi_minus.dim() != (n, d) {
            return Err(ProbeError::validation(format!(
                "phi_plus is {n}x{d} but phi_minus is {}x{}",
                self.phi_minus.nrows(),
                self.phi_minus.ncols()
            )));
        }
        if n == 0 || d == 0 {
            return Err(ProbeError::validation(format!(
                "need n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        for (what, m) in [("phi_plus", &self.phi_plus), ("phi_minus", &self.phi_minus)] {
            if let Some(index) = m.iter().position(|x| !x.is_finite()) {
                return Err(ProbeError::NonFinite {
                    what: what.into(),
                    index,
                });
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(ProbeError::validation(format!(
                    "{} labels for {n} pairs",
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&y| y > 1) {
                return Err(ProbeError::validation(format!("label value {bad} not in {{0, 1}}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.phi_plus.nrows()
    }

    pub fn d(&self) -> usize {
        self.phi_plus.ncols()
    }

    pub fn phi_plus(&self) -> ArrayView2<'_, f64> {
        self.phi_plus.view()
    }

    pub fn phi_minus(&self) -> ArrayView2<'_, f64> {
        self.phi_minus.view()
    }

    pub fn pair(&self, i: usize) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
        (self.phi_plus.row(i), self.phi_minus.row(i))
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels().ok_or(ProbeError::MissingLabels)
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Rows at `indices`, in the given order. Meta and the normalized flag
    /// carry over.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(ProbeError::validation(format!(
                "row index {bad} out of range for n={}",
                self.n()
            )));
        }
        let set = Self {
            phi_plus: self.phi_plus.select(Axis(0), indices),
            phi_minus: self.phi_minus.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            meta: self.meta.clone(),
            normalized: self.normalized,
        };
        set.validate()?;
        Ok(set)
    }

    /// SHA-256 over the numeric content (little-endian f64), labels and the
    /// normalized flag. Meta is excluded.
    pub fn digest(&self) -> String {
        let mut bytes = Vec::with_capacity(16 + 16 * self.n() * self.d() + self.n());
        bytes.extend_from_slice(&(self.n() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.d() as u64).to_le_bytes());
        for m in [&self.phi_plus, &self.phi_minus] {
            for x in m.iter() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        match &self.labels {
            Some(l) => {
                bytes.push(1);
                bytes.extend_from_slice(l);
            }
            None => bytes.push(0),
        }
        bytes.push(u8::from(self.normalized));
        sha256_hex(&bytes)
    }
}

/// Per-coordinate means and divisors of each set, fitted once and applied to
/// any split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    /// Divisors actually applied: the population std, or 1 where the std
    /// fell below `epsilon`.
    pub sigma_plus: Vec<f64>,
    pub sigma_minus: Vec<f64>,
    pub epsilon: f64,
}

fn column_stats(m: &Array2<f64>, epsilon: f64) -> (Array1<f64>, Array1<f64>) {
    let n = m.nrows() as f64;
    let mean = m.sum_axis(Axis(0)) / n;
    let mut sigma = Array1::zeros(m.ncols());
    for (j, col) in m.columns().into_iter().enumerate() {
        let var = col.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        sigma[j] = if std < epsilon { 1.0 } else { std };
    }
    (mean, sigma)
}

impl NormalizationStats {
    pub fn fit(set: &ContrastActivationSet) -> Result<Self> {
        Self::fit_with_floor(set, STD_FLOOR)
    }

    pub fn fit_with_floor(set: &ContrastActivationSet, epsilon: f64) -> Result<Self> {
        if set.n() < 2 {
            return Err(ProbeError::validation(
                "normalization needs at least 2 pairs",
            ));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(ProbeError::validation("std floor must be positive"));
        }
        let (mu_plus, sigma_plus) = column_stats(&set.phi_plus, epsilon);
        let (mu_minus, sigma_minus) = column_stats(&set.phi_minus, epsilon);
        Ok(Self {
            mu_plus: mu_plus.to_vec(),
            mu_minus: mu_minus.to_vec(),
            sigma_plus: sigma_plus.to_vec(),
            sigma_minus: sigma_minus.to_vec(),
            epsilon,
        })
    }

    pub fn d(&self) -> usize {
        self.mu_plus.len()
    }

    pub fn apply(&self, set: &ContrastActivationSet) -> Result<ContrastActivationSet> {
        if set.is_normalized() {
            return Err(ProbeError::validation("set is already normalized"));
        }
        if set.d() != self.d() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.d(),
                actual: set.d(),
            });
        }
        let standardize = |m: &Array2<f64>, mu: &[f64], sigma: &[f64]| {
            let mut out = m.clone();
            for mut row in out.rows_mut() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = (*x - mu[j]) / sigma[j];
                }
            }
            out
        };
        let mut out = ContrastActivationSet {
            phi_plus: standardize(&set.phi_plus, &self.mu_plus, &self.sigma_plus),
            phi_minus: standardize(&set.phi_minus, &self.mu_minus, &self.sigma_minus),
            labels: set.labels.clone(),
            meta: set.meta.clone(),
            normalized: true,
        };
        out.validate()?;
        out.set_normalized(true);
        Ok(out)
    }

    /// Maps a raw-space displacement direction into normalized coordinates.
    ///
    /// A raw displacement `+a` on the plus side and `-a` on the minus side
    /// becomes `a/sigma_plus + a/sigma_minus` after normalization, so the
    /// image direction is `a` scaled by the mean reciprocal divisor.
    pub fn map_displacement_direction(&self, raw: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if raw.len() != self.d() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.d(),
                actual: raw.len(),
            });
        }
        Ok(Array1::from_iter(raw.iter().enumerate().map(|(j, a)| {
            0.5 * a * (1.0 / self.sigma_plus[j] + 1.0 / self.sigma_minus[j])
        })))
    }
}

/// Normalizes `{phi_plus}` and `{phi_minus}` independently to zero mean and
/// unit population standard deviation per coordinate.
pub fn normalize(set: &ContrastActivationSet) -> Result<(ContrastActivationSet, NormalizationStats)> {
    if set.is_normalized() {
        return Err(ProbeError::validation("set is already normalized"));
    }
    let stats = NormalizationStats::fit(set)?;
    let out = stats.apply(set)?;
    Ok((out, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(n: usize, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(ProbeError::validation(format!(
                "train fraction {train_fraction} not in (0, 1)"
            )));
        }
        let n_train = (n as f64 * train_fraction).round() as usize;
        if n_train < 2 || n_train >= n {
            return Err(ProbeError::validation(format!(
                "split of n={n} at {train_fraction} gives {n_train} train / {} test pairs",
                n.saturating_sub(n_train)
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut train_indices = perm[..n_train].to_vec();
        let mut test_indices = perm[n_train..].to_vec();
        train_indices.sort_unstable();
        test_indices.sort_unstable();
        Ok(Self {
            train_indices,
            test_indices,
            seed,
        })
    }
}

/// Deterministic train/test split. Labels and meta carry through.
pub fn split(
    set: &ContrastActivationSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(ContrastActivationSet, ContrastActivationSet, SplitSpec)> {
    let spec = SplitSpec::new(set.n(), train_fraction, seed)?;
    let train = set.subset(&spec.train_indices)?;
    let test = set.subset(&spec.test_indices)?;
    Ok((train, test, spec))
}

/// Train and test splits normalized with statistics fitted on the train split
/// only.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub train: ContrastActivationSet,
    pub test: ContrastActivationSet,
    pub stats: Option<NormalizationStats>,
    pub split: SplitSpec,
}

/// Splits, then normalizes both halves with train statistics. Sets that are
/// already normalized are split as-is.
pub fn prepare(set: &ContrastActivationSet, train_fraction: f64, seed: u64) -> Result<PreparedSplits> {
    let (train, test, split) = split(set, train_fraction, seed)?;
    if set.is_normalized() {
        return Ok(PreparedSplits {
            train,
            test,
            stats: None,
            split,
        });
    }
    let stats = NormalizationStats::fit(&train)?;
    Ok(PreparedSplits {
        train: stats.apply(&train)?,
        test: stats.apply(&test)?,
        stats: Some(stats),
        split,
    })
}
