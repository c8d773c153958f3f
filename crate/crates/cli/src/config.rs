// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use mdprobe::eval::KNOWN_LOSSES;
use mdprobe::{GridSearchConfig, ProbeError, SearchObjective, SignMode, SyntheticConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// One dataset: either an existing container or a synthetic config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

fn default_model_id() -> String {
    "model".into()
}

/// Partial overrides of the grid-search defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOverrides {
    pub points_per_round: Option<usize>,
    pub seeds_per_point: Option<usize>,
    pub rounds: Option<usize>,
    pub accuracy_interval: Option<[f64; 2]>,
    pub cosine_interval: Option<[f64; 2]>,
}

impl SearchOverrides {
    pub fn apply(&self, objective: SearchObjective, base_seed: u64) -> GridSearchConfig {
        let mut cfg = GridSearchConfig::for_objective(objective);
        cfg.base_seed = base_seed;
        if let Some(k) = self.points_per_round {
            cfg.points_per_round = k;
        }
        if let Some(s) = self.seeds_per_point {
            cfg.seeds_per_point = s;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        let interval = match objective {
            SearchObjective::TrainAccuracy => self.accuracy_interval,
            SearchObjective::CosineToCcs => self.cosine_interval,
        };
        if let Some(i) = interval {
            cfg.initial_interval = i;
        }
        cfg
    }
}

/// The training settings a config may set; the seed is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: mdprobe::Optimizer,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            optimizer: d.optimizer,
        }
    }
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub datasets: Vec<DatasetEntry>,
    /// Report loss names, in the order they are run.
    pub losses: Vec<String>,
    pub train_fraction: f64,
    pub train: TrainSettings,
    pub sign_mode: SignMode,
    pub search: SearchOverrides,
    pub best_of: usize,
    /// Size of the CCS reference ensemble.
    pub ensemble: usize,
    /// Number of random directions averaged for the random baseline.
    pub random_k: usize,
    pub hist_bins: usize,
    pub compare_published: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            datasets: Vec::new(),
            losses: KNOWN_LOSSES.iter().map(|s| s.to_string()).collect(),
            train_fraction: 0.6,
            train: TrainSettings::default(),
            sign_mode: SignMode::MdConsistent,
            search: SearchOverrides::default(),
            best_of: 10,
            ensemble: 20,
            random_k: 10,
            hist_bins: 20,
            compare_published: false,
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "Average"
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.')
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> mdprobe::Result<Self> {
        let mut cfg: Self = crate::output::read_json(path)?;
        // Relative dataset paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for ds in &mut cfg.datasets {
            if let Some(p) = &ds.path {
                if p.is_relative() {
                    ds.path = Some(base.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> mdprobe::Result<()> {
        if self.datasets.is_empty() {
            return Err(ProbeError::validation("config lists no datasets"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for ds in &self.datasets {
            if !valid_id(&ds.id) || !valid_id(&ds.model_id) {
                return Err(ProbeError::validation(format!(
                    "dataset id {:?} / model id {:?} must be non-empty, not \"Average\", and use only [A-Za-z0-9_.-]",
                    ds.id, ds.model_id
                )));
            }
            if !seen.insert((&ds.id, &ds.model_id)) {
                return Err(ProbeError::validation(format!("dataset {} listed twice", ds.id)));
            }
            match (&ds.path, &ds.synthetic) {
                (Some(p), None) => {
                    if !p.is_dir() {
                        return Err(ProbeError::validation(format!("dataset path {} does not exist", p.display())));
                    }
                }
                (None, Some(s)) => s.validate()?,
                _ => {
                    return Err(ProbeError::validation(format!(
                        "dataset {} needs exactly one of `path` and `synthetic`",
                        ds.id
                    )))
                }
            }
        }
        if self.losses.is_empty() {
            return Err(ProbeError::validation("config lists no losses"));
        }
        for (i, l) in self.losses.iter().enumerate() {
            if !KNOWN_LOSSES.contains(&l.as_str()) {
                return Err(ProbeError::validation(format!(
                    "unknown loss {l:?}; expected one of {}",
                    KNOWN_LOSSES.join(", ")
                )));
            }
            if self.losses[..i].contains(l) {
                return Err(ProbeError::validation(format!("loss {l} listed twice")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ProbeError::validation("train_fraction must lie in (0, 1)"));
        }
        self.train.with_seed(0).validate()?;
        for objective in [SearchObjective::TrainAccuracy, SearchObjective::CosineToCcs] {
            self.search.apply(objective, 0).validate()?;
        }
        if self.best_of == 0 || self.random_k == 0 {
            return Err(ProbeError::validation("best_of and random_k must be >= 1"));
        }
        if self.ensemble < 2 {
            return Err(ProbeError::validation("ensemble must be >= 2"));
        }
        if self.hist_bins < 2 {
            return Err(ProbeError::validation("hist_bins must be >= 2"));
        }
        Ok(())
    }
}
