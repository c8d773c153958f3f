// SPDX-License-Identifier: MIT OR Apache-2.0

//! Coarse-to-fine grid search over the lambda hyper-parameter.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ContrastActivationSet;
use crate::digest::derive_seed;
use crate::error::{ProbeError, Result};
use crate::eval::{accuracy, mean_abs_cosine, OrientationMode};
use crate::losses::LossSpec;
use crate::prober::Direction;
use crate::trainer::{train_one, TrainConfig};

/// Largest lambda the search will ever evaluate.
pub const LAMBDA_CEILING: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchObjective {
    /// Mean train accuracy under auto orientation.
    TrainAccuracy,
    /// Mean absolute cosine to a CCS reference ensemble.
    CosineToCcs,
}

impl SearchObjective {
    pub fn default_interval(self) -> [f64; 2] {
        match self {
            SearchObjective::TrainAccuracy => [0.0, 0.99],
            SearchObjective::CosineToCcs => [0.9, 0.999],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSearchConfig {
    pub initial_interval: [f64; 2],
    pub points_per_round: usize,
    pub seeds_per_point: usize,
    pub rounds: usize,
    pub base_seed: u64,
    pub objective: SearchObjective,
}

impl GridSearchConfig {
    pub fn for_objective(objective: SearchObjective) -> Self {
        Self {
            initial_interval: objective.default_interval(),
            points_per_round: 11,
            seeds_per_point: 3,
            rounds: 2,
            base_seed: 0,
            objective,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.initial_interval;
        if !(0.0 <= lo && lo < hi && hi <= LAMBDA_CEILING) {
            return Err(ProbeError::validation(format!(
                "search interval [{lo}, {hi}] must satisfy 0 <= lo < hi <= {LAMBDA_CEILING}"
            )));
        }
        if self.points_per_round < 3 {
            return Err(ProbeError::validation("need at least 3 points per round"));
        }
        if self.rounds == 0 || self.seeds_per_point == 0 {
            return Err(ProbeError::validation("rounds and seeds per point must be >= 1"));
        }
        Ok(())
    }
}

/// `k` evenly spaced values from `lo` to `hi` inclusive.
pub fn grid_points(interval: [f64; 2], k: usize) -> Result<Vec<f64>> {
    let [lo, hi] = interval;
    if k < 2 || lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(ProbeError::validation("grid needs k >= 2 and lo < hi"));
    }
    let step = (hi - lo) / (k - 1) as f64;
    Ok((0..k)
        .map(|i| if i + 1 == k { hi } else { lo + step * i as f64 })
        .collect())
}

/// `[lambda_star - step, lambda_star + step]` clipped to `bounds`.
pub fn refine_interval(lambda_star: f64, step: f64, bounds: [f64; 2]) -> Result<[f64; 2]> {
    let [lo, hi] = bounds;
    if !(lo..=hi).contains(&lambda_star) {
        return Err(ProbeError::validation(format!("{lambda_star} outside [{lo}, {hi}]")));
    }
    Ok([(lambda_star - step).max(lo), (lambda_star + step).min(hi)])
}

/// Mean absolute cosine of a direction to the reference ensemble.
pub fn objective_cosine(direction: &Direction, reference: &[Direction]) -> Result<f64> {
    mean_abs_cosine(direction, reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: u64,
    /// `None` if the run diverged.
    pub objective: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrace {
    pub lambda: f64,
    pub mean_objective: Option<f64>,
    pub seeds: Vec<SeedTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub interval: [f64; 2],
    pub points: Vec<PointTrace>,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub loss_spec: LossSpec,
    pub config: GridSearchConfig,
    pub rounds: Vec<RoundTrace>,
    pub lambda_star: f64,
}

#[derive(Serialize)]
struct FlatRow {
    round: usize,
    lambda: f64,
    seed: u64,
    objective: Option<f64>,
}

impl SearchTrace {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One `round,lambda,seed,objective` row per trained prober.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rounds {
            for p in &r.points {
                for s in &p.seeds {
                    w.serialize(FlatRow {
                        round: r.round,
                        lambda: p.lambda,
                        seed: s.seed,
                        objective: s.objective,
                    })?;
                }
            }
        }
        w.flush().map_err(|e| ProbeError::io(path, e))
    }
}

fn score(
    spec: &LossSpec,
    set: &ContrastActivationSet,
    reference: Option<&[Direction]>,
    objective: SearchObjective,
    train: &TrainConfig,
) -> Result<SeedTrace> {
    let run = match train_one(spec, set, train) {
        Ok(run) => run,
        Err(ProbeError::Diverged { .. } | ProbeError::ZeroVector) => {
            return Ok(SeedTrace {
                seed: train.seed,
                objective: None,
                final_loss: None,
            })
        }
        Err(e) => return Err(e),
    };
    let value = match objective {
        SearchObjective::TrainAccuracy => accuracy(&run.prober, set, OrientationMode::Auto)?.0,
        SearchObjective::CosineToCcs => {
            objective_cosine(&run.prober.direction()?, reference.ok_or(ProbeError::MissingReference)?)?
        }
    };
    Ok(SeedTrace {
        seed: train.seed,
        objective: Some(value),
        final_loss: Some(run.final_train_loss),
    })
}

/// Runs the configured number of rounds. Each round trains
/// `seeds_per_point` probers at every grid point, picks the point with the
/// highest mean objective (ties go to the smaller lambda) and narrows the
/// interval to one grid step either side of it.
///
/// `spec_template` fixes the loss family and sign mode; its lambda is
/// replaced at each grid point. Seeds are derived from
/// `(base_seed, round, point, seed index)`; the seed in `train` is ignored.
pub fn grid_search(
    spec_template: &LossSpec,
    train_set: &ContrastActivationSet,
    reference: Option<&[Direction]>,
    config: &GridSearchConfig,
    train: &TrainConfig,
) -> Result<(f64, SearchTrace)> {
    config.validate()?;
    train.validate()?;
    spec_template.with_lambda(config.initial_interval[0])?;
    match config.objective {
        SearchObjective::TrainAccuracy => {
            train_set.require_labels()?;
        }
        SearchObjective::CosineToCcs => match reference {
            Some(r) if !r.is_empty() => {
                if let Some(bad) = r.iter().find(|d| d.d() != train_set.d()) {
                    return Err(ProbeError::DimensionMismatch {
                        expected: train_set.d(),
                        actual: bad.d(),
                    });
                }
            }
            _ => return Err(ProbeError::MissingReference),
        },
    }

    let k = config.points_per_round;
    let mut interval = config.initial_interval;
    let mut rounds = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let lambdas = grid_points(interval, k)?;
        let units: Vec<(usize, usize)> = (0..k)
            .flat_map(|j| (0..config.seeds_per_point).map(move |s| (j, s)))
            .collect();
        let seeds: Vec<SeedTrace> = units
            .par_iter()
            .map(|&(j, s)| {
                let spec = spec_template.with_lambda(lambdas[j])?;
                let seed = derive_seed(config.base_seed, &[round as u64, j as u64, s as u64]);
                score(&spec, train_set, reference, config.objective, &train.with_seed(seed))
            })
            .collect::<Result<_>>()?;

        let points: Vec<PointTrace> = lambdas
            .iter()
            .zip(seeds.chunks(config.seeds_per_point))
            .map(|(&lambda, chunk)| {
                let ok: Vec<f64> = chunk.iter().filter_map(|s| s.objective).collect();
                PointTrace {
                    lambda,
                    mean_objective: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                    seeds: chunk.to_vec(),
                }
            })
            .collect();

        let mut best: Option<(f64, f64)> = None;
        for p in &points {
            if let Some(m) = p.mean_objective {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((p.lambda, m));
                }
            }
        }
        let (lambda_star, _) = best.ok_or(ProbeError::AllDiverged(units.len()))?;
        let step = (interval[1] - interval[0]) / (k - 1) as f64;
        rounds.push(RoundTrace {
            round,
            interval,
            points,
            lambda_star,
        });
        interval = refine_interval(lambda_star, step, config.initial_interval)?;
    }

    let lambda_star = rounds.last().map(|r| r.lambda_star).expect("rounds >= 1");
    Ok((
        lambda_star,
        SearchTrace {
            loss_spec: spec_template.with_lambda(lambda_star)?,
            config: *config,
            rounds,
            lambda_star,
        },
    ))
}
