// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plot-ready tables: activation projections and prober output histograms.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ContrastActivationSet;
use crate::error::{ProbeError, Result};
use crate::losses::statement_pc1;
use crate::prober::Prober;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub pair: usize,
    pub member: Member,
    pub pc1_projection: f64,
    pub theta_projection: f64,
    pub label: u8,
}

/// One row per statement activation: its coordinate along the first
/// principal component of all `2n` statements and along `theta_hat`.
pub fn projection_table(set: &ContrastActivationSet, prober: &Prober) -> Result<Vec<ProjectionRow>> {
    let labels = set.require_labels()?;
    let theta_hat = prober.direction()?;
    if theta_hat.d() != set.d() {
        return Err(ProbeError::DimensionMismatch {
            expected: set.d(),
            actual: theta_hat.d(),
        });
    }
    let pc1 = statement_pc1(set)?;
    let mut rows = Vec::with_capacity(2 * set.n());
    for (i, &label) in labels.iter().enumerate() {
        let (plus, minus) = set.pair(i);
        for (member, phi) in [(Member::Plus, plus), (Member::Minus, minus)] {
            rows.push(ProjectionRow {
                pair: i,
                member,
                pc1_projection: pc1.as_array().dot(&phi),
                theta_projection: theta_hat.as_array().dot(&phi),
                label,
            });
        }
    }
    Ok(rows)
}

pub fn write_projection_csv(path: impl AsRef<Path>, rows: &[ProjectionRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

pub fn read_projection_csv(path: impl AsRef<Path>) -> Result<Vec<ProjectionRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(ProbeError::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Counts of the pair scores `p_bar` over `bin_count` equal bins of `[0, 1]`.
/// Bins are half-open except the last, which includes 1.
pub fn output_histogram(prober: &Prober, set: &ContrastActivationSet, bin_count: usize) -> Result<Histogram> {
    if bin_count < 2 {
        return Err(ProbeError::validation("histogram needs at least 2 bins"));
    }
    let width = 1.0 / bin_count as f64;
    let mut bins: Vec<HistogramBin> = (0..bin_count)
        .map(|k| HistogramBin {
            bin_low: k as f64 * width,
            bin_high: if k + 1 == bin_count { 1.0 } else { (k + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for i in 0..set.n() {
        let (plus, minus) = set.pair(i);
        let p = prober.pair_score(plus, minus)?;
        let k = ((p * bin_count as f64).floor() as usize).min(bin_count - 1);
        bins[k].count += 1;
    }
    Ok(Histogram { bins })
}

pub fn write_histogram_csv(path: impl AsRef<Path>, histogram: &Histogram) -> Result<()> {
    write_csv(path.as_ref(), &histogram.bins)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| ProbeError::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| ProbeError::io(path, e))
}
