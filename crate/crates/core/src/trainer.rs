// SPDX-License-Identifier: MIT OR Apache-2.0

//! Full-batch training loops, best-of-k selection and baseline constructors.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ContrastActivationSet;
use crate::digest::json_digest;
use crate::error::{ProbeError, Result};
use crate::losses::{pca_direction, LossSpec, Objective};
use crate::prober::{Constraint, Prober, ProberRecord, MIN_NORM};

/// Offset applied to the seed when a projected weight vector collapses to zero
/// and training restarts from a fresh draw.
const REINIT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Gd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.01,
            seed: 0,
            optimizer: Optimizer::Gd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ProbeError::validation("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ProbeError::validation(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProber {
    pub prober: Prober,
    pub final_train_loss: f64,
    pub seed: u64,
    pub loss_spec: LossSpec,
    /// Digest of the loss spec and training configuration.
    pub config_digest: String,
}

impl TrainedProber {
    pub fn record(&self) -> ProberRecord {
        let mut rec = ProberRecord::new(&self.prober, self.loss_spec.variant().name());
        rec.seed = Some(self.seed);
        rec.lambda = self.loss_spec.lambda();
        rec.final_loss = Some(self.final_train_loss);
        rec.sign_mode = self.loss_spec.sign_mode().map(|m| m.name().to_string());
        rec.config_digest = Some(self.config_digest.clone());
        rec
    }
}

fn config_digest(spec: &LossSpec, config: &TrainConfig) -> Result<String> {
    json_digest(&(spec, config))
}

struct Adam {
    m: Array1<f64>,
    v: Array1<f64>,
    m_bias: f64,
    v_bias: f64,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(d: usize) -> Self {
        Self {
            m: Array1::zeros(d),
            v: Array1::zeros(d),
            m_bias: 0.0,
            v_bias: 0.0,
            t: 0,
        }
    }

    fn step(&mut self, lr: f64, theta: &mut Array1<f64>, bias: &mut f64, g: &Array1<f64>, gb: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for j in 0..theta.len() {
            self.m[j] = Self::BETA1 * self.m[j] + (1.0 - Self::BETA1) * g[j];
            self.v[j] = Self::BETA2 * self.v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
            theta[j] -= lr * (self.m[j] / c1) / ((self.v[j] / c2).sqrt() + Self::EPS);
        }
        self.m_bias = Self::BETA1 * self.m_bias + (1.0 - Self::BETA1) * gb;
        self.v_bias = Self::BETA2 * self.v_bias + (1.0 - Self::BETA2) * gb * gb;
        *bias -= lr * (self.m_bias / c1) / ((self.v_bias / c2).sqrt() + Self::EPS);
    }
}

/// Per-epoch view handed to [`train_one_observed`] after each update.
#[derive(Debug)]
pub struct EpochState<'a> {
    pub epoch: usize,
    /// Loss before this epoch's update.
    pub loss: f64,
    pub theta: &'a Array1<f64>,
    pub bias: f64,
}

fn check_inputs(spec: &LossSpec, set: &ContrastActivationSet, config: &TrainConfig) -> Result<()> {
    spec.validate()?;
    config.validate()?;
    if !set.is_normalized() {
        return Err(ProbeError::validation("training set must be normalized first"));
    }
    if spec.needs_labels() {
        set.require_labels()?;
    }
    Ok(())
}

/// Trains one prober by full-batch descent.
pub fn train_one(spec: &LossSpec, set: &ContrastActivationSet, config: &TrainConfig) -> Result<TrainedProber> {
    train_one_observed(spec, set, config, |_| {})
}

/// [`train_one`] with a callback after every epoch.
pub fn train_one_observed<F>(spec: &LossSpec, set: &ContrastActivationSet, config: &TrainConfig, mut observe: F) -> Result<TrainedProber>
where
    F: FnMut(&EpochState<'_>),
{
    check_inputs(spec, set, config)?;
    let objective = Objective::new(*spec, set)?;
    let constraint = spec.constraint();
    let unit = constraint == Constraint::UnitNorm;

    let init = Prober::random_init(set.d(), config.seed, constraint)?;
    let mut theta = init.theta().clone();
    let mut bias = init.bias();
    let mut reinitialized = false;
    let mut adam = Adam::new(set.d());

    for epoch in 0..config.epochs {
        let (loss, g, gb) = objective.value_and_gradient(theta.view(), bias)?;
        if !loss.is_finite() {
            return Err(ProbeError::Diverged { epoch, loss });
        }
        match config.optimizer {
            Optimizer::Gd => {
                theta.scaled_add(-config.learning_rate, &g);
                bias -= config.learning_rate * gb;
            }
            Optimizer::Adam => adam.step(config.learning_rate, &mut theta, &mut bias, &g, gb),
        }
        if theta.iter().any(|x| !x.is_finite()) || !bias.is_finite() {
            return Err(ProbeError::Diverged { epoch, loss: f64::NAN });
        }
        if unit {
            bias = 0.0;
            let norm = theta.dot(&theta).sqrt();
            if norm <= MIN_NORM {
                if reinitialized {
                    return Err(ProbeError::ZeroVector);
                }
                reinitialized = true;
                let seed = config.seed.wrapping_add(REINIT_SEED_OFFSET);
                theta = Prober::random_init(set.d(), seed, constraint)?.theta().clone();
                adam = Adam::new(set.d());
            } else {
                theta /= norm;
            }
        }
        observe(&EpochState {
            epoch,
            loss,
            theta: &theta,
            bias,
        });
    }

    let final_train_loss = objective.loss(theta.view(), bias)?;
    if !final_train_loss.is_finite() {
        return Err(ProbeError::Diverged {
            epoch: config.epochs,
            loss: final_train_loss,
        });
    }
    Ok(TrainedProber {
        prober: Prober::new(theta, bias, constraint)?,
        final_train_loss,
        seed: config.seed,
        loss_spec: *spec,
        config_digest: config_digest(spec, config)?,
    })
}

/// Runs seeds `config.seed + 0 .. k` (in parallel) and returns the run with the
/// lowest final training loss; ties go to the lowest seed. Diverged runs are
/// skipped.
pub fn train_best_of(spec: &LossSpec, set: &ContrastActivationSet, config: &TrainConfig, k: usize) -> Result<TrainedProber> {
    let runs = train_seeds(spec, set, config, k)?;
    select_min_loss(runs, k)
}

/// All `k` runs in seed order; individual failures are kept as errors.
pub fn train_seeds(spec: &LossSpec, set: &ContrastActivationSet, config: &TrainConfig, k: usize) -> Result<Vec<Result<TrainedProber>>> {
    if k == 0 {
        return Err(ProbeError::validation("need at least one run"));
    }
    check_inputs(spec, set, config)?;
    Ok((0..k as u64)
        .into_par_iter()
        .map(|i| train_one(spec, set, &config.with_seed(config.seed.wrapping_add(i))))
        .collect())
}

/// Picks the lowest final loss from [`train_seeds`] output, lowest seed on
/// ties. Diverged and zero-vector runs are skipped; other errors propagate.
pub fn select_min_loss(runs: Vec<Result<TrainedProber>>, k: usize) -> Result<TrainedProber> {
    let mut best: Option<TrainedProber> = None;
    for run in runs {
        match run {
            Ok(run) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        run.final_train_loss < b.final_train_loss
                            || (run.final_train_loss == b.final_train_loss && run.seed < b.seed)
                    }
                };
                if better {
                    best = Some(run);
                }
            }
            Err(ProbeError::Diverged { .. } | ProbeError::ZeroVector) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(ProbeError::AllDiverged(k))
}

/// `k` independently seeded CCS probers, all retained.
pub fn train_ccs_reference(set: &ContrastActivationSet, config: &TrainConfig, k: usize) -> Result<Vec<TrainedProber>> {
    if k < 2 {
        return Err(ProbeError::validation("a reference ensemble needs at least 2 probers"));
    }
    train_seeds(&LossSpec::Ccs, set, config, k)?.into_iter().collect()
}

/// `k` untrained unit-norm probers with seeds `seed + 0 .. k`.
pub fn random_baseline(d: usize, k: usize, seed: u64) -> Result<Vec<Prober>> {
    if k == 0 {
        return Err(ProbeError::validation("need at least one random prober"));
    }
    (0..k as u64)
        .map(|i| Prober::random_init(d, seed.wrapping_add(i), Constraint::UnitNorm))
        .collect()
}

pub fn fit_supervised(set: &ContrastActivationSet, config: &TrainConfig) -> Result<TrainedProber> {
    train_one(&LossSpec::Supervised, set, config)
}

pub fn fit_pca(set: &ContrastActivationSet) -> Result<Prober> {
    if !set.is_normalized() {
        return Err(ProbeError::validation("PCA baseline expects a normalized set"));
    }
    Ok(Prober::from_direction(&pca_direction(set)?))
}
