// SPDX-License-Identifier: MIT OR Apache-2.0

//! Accuracy with post-hoc orientation, cosine comparisons against a reference
//! ensemble, tail probabilities, plot-data emitters and report tables.

mod plots;
pub mod published;
mod report;
mod tail;

use serde::{Deserialize, Serialize};

use crate::dataset::ContrastActivationSet;
use crate::error::{ProbeError, Result};
use crate::prober::{Direction, Prober};

pub use plots::{
    output_histogram, projection_table, read_projection_csv, write_histogram_csv, write_projection_csv, Histogram,
    HistogramBin, Member, ProjectionRow,
};
pub use report::{build_report, EvalReport, ReportRow, RunResult, SelfSimilarityEntry, KNOWN_LOSSES, REPORT_SCHEMA_VERSION};
pub use tail::{ln_regularized_beta, random_cosine_tail};

/// Which way round a prober's output is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `p_bar > 0.5` predicts label 1.
    Positive,
    /// `p_bar > 0.5` predicts label 0.
    Negative,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Orientation::Positive => "positive",
            Orientation::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMode {
    /// Pick whichever orientation scores higher on the evaluated set.
    #[default]
    Auto,
    Fixed(Orientation),
}

/// `Some(true)` if `p_bar > 0.5`, `Some(false)` if below, `None` on an exact tie.
pub fn pair_decision(prober: &Prober, set: &ContrastActivationSet, i: usize) -> Result<Option<bool>> {
    let (plus, minus) = set.pair(i);
    let p = prober.pair_score(plus, minus)?;
    Ok(if p > 0.5 {
        Some(true)
    } else if p < 0.5 {
        Some(false)
    } else {
        None
    })
}

/// Fraction of pairs classified correctly. Exact ties score one half.
pub fn accuracy(prober: &Prober, set: &ContrastActivationSet, mode: OrientationMode) -> Result<(f64, Orientation)> {
    let labels = set.require_labels()?;
    if prober.d() != set.d() {
        return Err(ProbeError::DimensionMismatch {
            expected: set.d(),
            actual: prober.d(),
        });
    }
    let mut correct = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        correct += match pair_decision(prober, set, i)? {
            Some(yes) => f64::from(u8::from(yes == (y == 1))),
            None => 0.5,
        };
    }
    // Both orientations from counts, so flipping the prober swaps them exactly.
    let total = labels.len() as f64;
    let positive = correct / total;
    let negative = (total - correct) / total;
    Ok(match mode {
        OrientationMode::Fixed(Orientation::Positive) => (positive, Orientation::Positive),
        OrientationMode::Fixed(Orientation::Negative) => (negative, Orientation::Negative),
        OrientationMode::Auto if positive >= negative => (positive, Orientation::Positive),
        OrientationMode::Auto => (negative, Orientation::Negative),
    })
}

/// Mean of `|cos(direction, r)|` over the reference directions.
pub fn mean_abs_cosine(direction: &Direction, reference: &[Direction]) -> Result<f64> {
    if reference.is_empty() {
        return Err(ProbeError::MissingReference);
    }
    let mut total = 0.0;
    for r in reference {
        total += direction.cosine(r)?.abs();
    }
    Ok(total / reference.len() as f64)
}

/// Mean `|cos|` over all unordered pairs of distinct members.
pub fn self_similarity(reference: &[Direction]) -> Result<f64> {
    if reference.len() < 2 {
        return Err(ProbeError::validation("self-similarity needs at least 2 directions"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, a) in reference.iter().enumerate() {
        for b in &reference[i + 1..] {
            total += a.cosine(b)?.abs();
            count += 1;
        }
    }
    Ok(total / count as f64)
}
