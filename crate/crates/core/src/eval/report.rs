// SPDX-License-Identifier: MIT OR Apache-2.0

//! Result tables keyed by (dataset, model, loss) with per-model averages.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::published;
use super::Orientation;
use crate::error::{ProbeError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Row label used for per-model averages.
pub const AVERAGE: &str = "Average";

/// Loss names accepted in a report, in table column order.
pub const KNOWN_LOSSES: [&str; 8] = published::LOSSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset_id: String,
    pub model_id: String,
    pub loss_name: String,
    pub test_accuracy: f64,
    pub mean_abs_cosine_to_ccs: Option<f64>,
    pub lambda_star: Option<f64>,
    pub orientation: Option<Orientation>,
    pub sign_mode: Option<String>,
}

/// One evaluated cell, as fed to [`build_report`].
pub type RunResult = ReportRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarityEntry {
    pub dataset_id: String,
    pub model_id: String,
    pub self_similarity: f64,
    pub ensemble_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Free-form run settings such as the cosine convention and optimizer.
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
    /// One row per (model, loss) with `dataset_id = "Average"`.
    pub averages: Vec<ReportRow>,
    pub self_similarity: Vec<SelfSimilarityEntry>,
}

fn check_unit(what: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ProbeError::validation(format!("{what} {x} outside [0, 1]")));
    }
    Ok(())
}

/// Validates the cells, sorts them by key and appends per-model averages
/// over datasets.
pub fn build_report(runs: &[RunResult], self_similarity: &[SelfSimilarityEntry]) -> Result<EvalReport> {
    let mut seen = BTreeSet::new();
    for r in runs {
        if !KNOWN_LOSSES.contains(&r.loss_name.as_str()) {
            return Err(ProbeError::validation(format!("unknown loss name {:?}", r.loss_name)));
        }
        if r.dataset_id == AVERAGE {
            return Err(ProbeError::validation("dataset id \"Average\" is reserved"));
        }
        check_unit("accuracy", r.test_accuracy)?;
        if let Some(c) = r.mean_abs_cosine_to_ccs {
            check_unit("cosine", c)?;
        }
        if !seen.insert((&r.dataset_id, &r.model_id, &r.loss_name)) {
            return Err(ProbeError::validation(format!(
                "duplicate cell ({}, {}, {})",
                r.dataset_id, r.model_id, r.loss_name
            )));
        }
    }
    for s in self_similarity {
        check_unit("self-similarity", s.self_similarity)?;
    }

    let mut rows = runs.to_vec();
    rows.sort_by(|a, b| {
        (&a.model_id, loss_rank(&a.loss_name), &a.dataset_id).cmp(&(&b.model_id, loss_rank(&b.loss_name), &b.dataset_id))
    });

    let mut groups: BTreeMap<(&str, usize), Vec<&ReportRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry((&r.model_id, loss_rank(&r.loss_name))).or_default().push(r);
    }
    let averages = groups
        .into_values()
        .map(|cells| {
            let k = cells.len() as f64;
            let cosine = cells
                .iter()
                .map(|c| c.mean_abs_cosine_to_ccs)
                .sum::<Option<f64>>()
                .map(|s| s / k);
            ReportRow {
                dataset_id: AVERAGE.to_string(),
                model_id: cells[0].model_id.clone(),
                loss_name: cells[0].loss_name.clone(),
                test_accuracy: cells.iter().map(|c| c.test_accuracy).sum::<f64>() / k,
                mean_abs_cosine_to_ccs: cosine,
                lambda_star: None,
                orientation: None,
                sign_mode: None,
            }
        })
        .collect();

    let mut self_similarity = self_similarity.to_vec();
    self_similarity.sort_by(|a, b| (&a.model_id, &a.dataset_id).cmp(&(&b.model_id, &b.dataset_id)));

    let mut meta = BTreeMap::new();
    meta.insert("cosine".to_string(), "absolute".to_string());
    meta.insert("orientation".to_string(), "fit on evaluated set".to_string());
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        meta,
        rows,
        averages,
        self_similarity,
    })
}

fn loss_rank(name: &str) -> usize {
    KNOWN_LOSSES.iter().position(|l| *l == name).unwrap_or(KNOWN_LOSSES.len())
}

#[derive(Serialize)]
struct LongRow<'a> {
    dataset_id: &'a str,
    model_id: &'a str,
    loss_name: &'a str,
    test_accuracy: f64,
    mean_abs_cosine_to_ccs: Option<f64>,
    lambda_star: Option<f64>,
    orientation: Option<&'static str>,
    sign_mode: Option<&'a str>,
}

#[derive(Serialize)]
struct PublishedRow<'a> {
    loss_name: &'a str,
    published_accuracy: f64,
    published_cosine_to_ccs: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ProbeError::validation(format!(
                "unsupported report schema version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Writes `report.json`, `rows.csv`, `accuracy_table.csv` and
    /// `cosine_table.csv` into `dir`; with `compare_published`, also
    /// `published_reference.csv`.
    pub fn write(&self, dir: impl AsRef<Path>, compare_published: bool) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| ProbeError::io(dir, e))?;
        let json_path = dir.join("report.json");
        fs::write(&json_path, self.to_json()?).map_err(|e| ProbeError::io(&json_path, e))?;

        let path = dir.join("rows.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in self.rows.iter().chain(&self.averages) {
            w.serialize(LongRow {
                dataset_id: &r.dataset_id,
                model_id: &r.model_id,
                loss_name: &r.loss_name,
                test_accuracy: r.test_accuracy,
                mean_abs_cosine_to_ccs: r.mean_abs_cosine_to_ccs,
                lambda_star: r.lambda_star,
                orientation: r.orientation.map(Orientation::name),
                sign_mode: r.sign_mode.as_deref(),
            })?;
        }
        w.flush().map_err(|e| ProbeError::io(&path, e))?;

        self.write_wide(&dir.join("accuracy_table.csv"), compare_published, |r| Some(r.test_accuracy), |l| {
            published::accuracy(AVERAGE, l)
        })?;
        self.write_wide(&dir.join("cosine_table.csv"), compare_published, |r| r.mean_abs_cosine_to_ccs, |l| {
            published::cosine_to_ccs(AVERAGE, l)
        })?;

        if compare_published {
            let path = dir.join("published_reference.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for (c, loss) in published::LOSSES.iter().enumerate() {
                w.serialize(PublishedRow {
                    loss_name: loss,
                    published_accuracy: published::ACCURACY[4][c],
                    published_cosine_to_ccs: published::COSINE_TO_CCS[4][c],
                })?;
            }
            w.flush().map_err(|e| ProbeError::io(&path, e))?;
        }
        Ok(())
    }

    /// Datasets as rows, losses as columns, grouped by model; each model's
    /// block ends with its average row. With `compare_published` a final
    /// row carries the published cross-model averages.
    fn write_wide<F, P>(&self, path: &Path, compare_published: bool, value: F, published_value: P) -> Result<()>
    where
        F: Fn(&ReportRow) -> Option<f64>,
        P: Fn(&str) -> Option<f64>,
    {
        let losses: Vec<&str> = KNOWN_LOSSES
            .iter()
            .copied()
            .filter(|l| self.rows.iter().any(|r| r.loss_name == *l))
            .collect();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["model_id", "dataset_id"];
        header.extend(&losses);
        w.write_record(&header)?;

        let mut cells: BTreeMap<(&str, &str), BTreeMap<&str, Option<f64>>> = BTreeMap::new();
        for r in &self.rows {
            cells
                .entry((&r.model_id, &r.dataset_id))
                .or_default()
                .insert(&r.loss_name, value(r));
        }
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let models: BTreeSet<&str> = self.rows.iter().map(|r| r.model_id.as_str()).collect();
        for model in models {
            for ((m, dataset), row) in cells.range((model, "")..) {
                if *m != model {
                    break;
                }
                let mut record = vec![m.to_string(), dataset.to_string()];
                record.extend(losses.iter().map(|l| fmt(row.get(l).copied().flatten())));
                w.write_record(&record)?;
            }
            let mut record = vec![model.to_string(), AVERAGE.to_string()];
            record.extend(losses.iter().map(|l| {
                fmt(self
                    .averages
                    .iter()
                    .find(|a| a.model_id == model && a.loss_name == *l)
                    .and_then(&value))
            }));
            w.write_record(&record)?;
        }
        if compare_published {
            let mut record = vec!["published".to_string(), AVERAGE.to_string()];
            record.extend(losses.iter().map(|l| fmt(published_value(l))));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| ProbeError::io(path, e))
    }
}
