// SPDX-License-Identifier: MIT OR Apache-2.0

//! Training objectives and their analytic gradients.
//!
//! With displacements `u_i = phi_plus_i - phi_minus_i`, pair sums
//! `v_i = phi_plus_i + phi_minus_i` and a unit direction `theta_hat`:
//!
//! ```text
//! sigma_d^2 = mean_i (theta_hat . u_i)^2
//! sigma_m^2 = mean_i (theta_hat . v_i)^2
//! MD        = (lambda - 1) sigma_d^2 + lambda sigma_m^2
//! MA        = c(lambda) mean|theta_hat . u_i| + lambda std|theta_hat . u_i|
//! SMR       = c(lambda) sqrt(sigma_d^2)       + lambda std|theta_hat . u_i|
//! ```
//!
//! where `c(lambda)` is `1 - lambda` in [`SignMode::Literal`] and
//! `lambda - 1` in [`SignMode::MdConsistent`]. Unit-constrained losses are
//! differentiated with respect to the raw weight vector through
//! `theta_hat = theta / |theta|`; the trainer re-projects after each step.

pub mod pca;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::ContrastActivationSet;
use crate::error::{ProbeError, Result};
use crate::prober::{sigmoid, Constraint, Direction, Prober, MIN_NORM};

pub use pca::{pca_direction, statement_pc1, top_eigenvector, PCA_MAX_ITER, PCA_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Ccs,
    Md,
    Ma,
    Smr,
    Supervised,
}

impl LossVariant {
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Ccs => "ccs",
            LossVariant::Md => "md",
            LossVariant::Ma => "ma",
            LossVariant::Smr => "smr",
            LossVariant::Supervised => "supervised",
        }
    }

    pub fn constraint(self) -> Constraint {
        match self {
            LossVariant::Ccs | LossVariant::Supervised => Constraint::Unconstrained,
            LossVariant::Md | LossVariant::Ma | LossVariant::Smr => Constraint::UnitNorm,
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sign of the mean-separation term in MA and SMR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// `(1 - lambda) * mu + lambda * sigma`: minimizing shrinks separation.
    Literal,
    /// `(lambda - 1) * mu + lambda * sigma`: separation is maximized, as in MD.
    #[default]
    MdConsistent,
}

impl SignMode {
    pub fn name(self) -> &'static str {
        match self {
            SignMode::Literal => "literal",
            SignMode::MdConsistent => "md_consistent",
        }
    }

    fn mean_coefficient(self, lambda: f64) -> f64 {
        match self {
            SignMode::Literal => 1.0 - lambda,
            SignMode::MdConsistent => lambda - 1.0,
        }
    }
}

/// Fully determines a training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LossSpec {
    Ccs,
    Md { lambda: f64 },
    Ma { lambda: f64, sign_mode: SignMode },
    Smr { lambda: f64, sign_mode: SignMode },
    Supervised,
}

impl LossSpec {
    pub fn variant(&self) -> LossVariant {
        match self {
            LossSpec::Ccs => LossVariant::Ccs,
            LossSpec::Md { .. } => LossVariant::Md,
            LossSpec::Ma { .. } => LossVariant::Ma,
            LossSpec::Smr { .. } => LossVariant::Smr,
            LossSpec::Supervised => LossVariant::Supervised,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            LossSpec::Md { lambda } | LossSpec::Ma { lambda, .. } | LossSpec::Smr { lambda, .. } => {
                Some(lambda)
            }
            LossSpec::Ccs | LossSpec::Supervised => None,
        }
    }

    pub fn sign_mode(&self) -> Option<SignMode> {
        match *self {
            LossSpec::Ma { sign_mode, .. } | LossSpec::Smr { sign_mode, .. } => Some(sign_mode),
            _ => None,
        }
    }

    pub fn constraint(&self) -> Constraint {
        self.variant().constraint()
    }

    pub fn needs_labels(&self) -> bool {
        matches!(self, LossSpec::Supervised)
    }

    /// The same family at a different lambda. Fails for CCS and supervised.
    pub fn with_lambda(&self, lambda: f64) -> Result<LossSpec> {
        let spec = match *self {
            LossSpec::Md { .. } => LossSpec::Md { lambda },
            LossSpec::Ma { sign_mode, .. } => LossSpec::Ma { lambda, sign_mode },
            LossSpec::Smr { sign_mode, .. } => LossSpec::Smr { lambda, sign_mode },
            LossSpec::Ccs | LossSpec::Supervised => {
                return Err(ProbeError::validation(format!(
                    "{} has no lambda hyper-parameter",
                    self.variant()
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lambda must lie in `[0, 1]`. The grid search imposes the tighter
    /// `0.999` ceiling itself.
    pub fn validate(&self) -> Result<()> {
        if let Some(lambda) = self.lambda() {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(ProbeError::validation(format!("lambda {lambda} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Displacements `u` and pair sums `v`, one row per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStatistics {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl PairStatistics {
    pub fn from_set(set: &ContrastActivationSet) -> Self {
        Self {
            u: &set.phi_plus() - &set.phi_minus(),
            v: &set.phi_plus() + &set.phi_minus(),
        }
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.u.ncols()
    }

    fn check(&self, direction: &Direction) -> Result<()> {
        if direction.d() != self.d() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.d(),
                actual: direction.d(),
            });
        }
        Ok(())
    }
}

fn mean_square_projection(rows: ArrayView2<'_, f64>, direction: ArrayView1<'_, f64>) -> f64 {
    let n = rows.nrows() as f64;
    rows.rows().into_iter().map(|r| r.dot(&direction).powi(2)).sum::<f64>() / n
}

pub fn sigma_d2(direction: &Direction, pairs: &PairStatistics) -> Result<f64> {
    pairs.check(direction)?;
    Ok(mean_square_projection(pairs.u.view(), direction.as_array().view()))
}

pub fn sigma_m2(direction: &Direction, pairs: &PairStatistics) -> Result<f64> {
    pairs.check(direction)?;
    Ok(mean_square_projection(pairs.v.view(), direction.as_array().view()))
}

pub fn md_loss(direction: &Direction, pairs: &PairStatistics, lambda: f64) -> Result<f64> {
    Ok((lambda - 1.0) * sigma_d2(direction, pairs)? + lambda * sigma_m2(direction, pairs)?)
}

/// Mean and population std of `|a_i|`.
fn abs_mean_std(a: &Array1<f64>) -> (f64, f64) {
    let n = a.len() as f64;
    let mu = a.iter().map(|x| x.abs()).sum::<f64>() / n;
    let var = a.iter().map(|x| (x.abs() - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

pub fn ma_loss(direction: &Direction, pairs: &PairStatistics, lambda: f64, sign_mode: SignMode) -> Result<f64> {
    pairs.check(direction)?;
    let a = pairs.u.dot(direction.as_array());
    let (mu, sigma) = abs_mean_std(&a);
    Ok(sign_mode.mean_coefficient(lambda) * mu + lambda * sigma)
}

/// Root mean square of `theta_hat . u_i`, i.e. `sqrt(sigma_d^2)`.
pub fn smr_mean(direction: &Direction, pairs: &PairStatistics) -> Result<f64> {
    Ok(sigma_d2(direction, pairs)?.sqrt())
}

pub fn smr_loss(direction: &Direction, pairs: &PairStatistics, lambda: f64, sign_mode: SignMode) -> Result<f64> {
    pairs.check(direction)?;
    let a = pairs.u.dot(direction.as_array());
    let (_, sigma) = abs_mean_std(&a);
    Ok(sign_mode.mean_coefficient(lambda) * smr_mean(direction, pairs)? + lambda * sigma)
}

fn check_prober(prober: &Prober, set: &ContrastActivationSet) -> Result<()> {
    if prober.d() != set.d() {
        return Err(ProbeError::DimensionMismatch {
            expected: set.d(),
            actual: prober.d(),
        });
    }
    Ok(())
}

pub fn ccs_loss(prober: &Prober, set: &ContrastActivationSet) -> Result<f64> {
    check_prober(prober, set)?;
    Objective::new(LossSpec::Ccs, set)?.loss(prober.theta().view(), prober.bias())
}

pub fn supervised_loss(prober: &Prober, set: &ContrastActivationSet) -> Result<f64> {
    check_prober(prober, set)?;
    Objective::new(LossSpec::Supervised, set)?.loss(prober.theta().view(), prober.bias())
}

/// Analytic gradient of `spec` at `prober` with respect to `(theta, bias)`.
pub fn gradient(spec: &LossSpec, prober: &Prober, set: &ContrastActivationSet) -> Result<(Array1<f64>, f64)> {
    check_prober(prober, set)?;
    let (_, g, gb) = Objective::new(*spec, set)?.value_and_gradient(prober.theta().view(), prober.bias())?;
    Ok((g, gb))
}

/// Evaluates the loss as a function of the raw weights `theta` and `bias`.
/// For unit-constrained losses the value depends on `theta / |theta|` only and
/// the bias is ignored.
pub fn loss_value(spec: &LossSpec, theta: ArrayView1<'_, f64>, bias: f64, set: &ContrastActivationSet) -> Result<f64> {
    Objective::new(*spec, set)?.loss(theta, bias)
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

enum Prepared<'a> {
    Ccs,
    Supervised(&'a [u8]),
    /// Second-moment matrices `U^T U / n` and `V^T V / n`.
    Md { gram_u: Array2<f64>, gram_v: Array2<f64> },
    Abs(PairStatistics),
}

/// A loss bound to a training set, with whatever per-set precomputation the
/// variant benefits from.
pub struct Objective<'a> {
    spec: LossSpec,
    set: &'a ContrastActivationSet,
    prepared: Prepared<'a>,
}

impl<'a> Objective<'a> {
    pub fn new(spec: LossSpec, set: &'a ContrastActivationSet) -> Result<Self> {
        spec.validate()?;
        let prepared = match spec {
            LossSpec::Ccs => Prepared::Ccs,
            LossSpec::Supervised => Prepared::Supervised(set.require_labels()?),
            LossSpec::Md { .. } => {
                let pairs = PairStatistics::from_set(set);
                let n = set.n() as f64;
                Prepared::Md {
                    gram_u: pairs.u.t().dot(&pairs.u) / n,
                    gram_v: pairs.v.t().dot(&pairs.v) / n,
                }
            }
            LossSpec::Ma { .. } | LossSpec::Smr { .. } => Prepared::Abs(PairStatistics::from_set(set)),
        };
        Ok(Self { spec, set, prepared })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn loss(&self, theta: ArrayView1<'_, f64>, bias: f64) -> Result<f64> {
        Ok(self.value_and_gradient(theta, bias)?.0)
    }

    /// Loss, gradient with respect to `theta`, and derivative with respect to
    /// the bias (zero for unit-constrained losses).
    pub fn value_and_gradient(&self, theta: ArrayView1<'_, f64>, bias: f64) -> Result<(f64, Array1<f64>, f64)> {
        if theta.len() != self.set.d() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.set.d(),
                actual: theta.len(),
            });
        }
        match &self.prepared {
            Prepared::Ccs => Ok(self.ccs(theta, bias)),
            Prepared::Supervised(labels) => Ok(self.supervised(labels, theta, bias)),
            Prepared::Md { gram_u, gram_v } => {
                let lambda = self.spec.lambda().unwrap_or_default();
                self.on_sphere(theta, |t| {
                    let a_theta = (lambda - 1.0) * gram_u.dot(&t) + lambda * gram_v.dot(&t);
                    (t.dot(&a_theta), 2.0 * a_theta)
                })
            }
            Prepared::Abs(pairs) => {
                let lambda = self.spec.lambda().unwrap_or_default();
                let coef = self.spec.sign_mode().unwrap_or_default().mean_coefficient(lambda);
                let smr = matches!(self.spec, LossSpec::Smr { .. });
                self.on_sphere(theta, |t| abs_loss_on_sphere(pairs, t, lambda, coef, smr))
            }
        }
    }

    /// Evaluates `f(theta / |theta|)` and chains its gradient through the
    /// normalization: `(I - t t^T) grad_t / |theta|`.
    fn on_sphere<F>(&self, theta: ArrayView1<'_, f64>, f: F) -> Result<(f64, Array1<f64>, f64)>
    where
        F: FnOnce(ArrayView1<'_, f64>) -> (f64, Array1<f64>),
    {
        let r = theta.dot(&theta).sqrt();
        if r <= MIN_NORM {
            return Err(ProbeError::ZeroVector);
        }
        let t = &theta / r;
        let (value, grad_t) = f(t.view());
        let radial = grad_t.dot(&t);
        let grad = (&grad_t - &(&t * radial)) / r;
        Ok((value, grad, 0.0))
    }

    fn ccs(&self, theta: ArrayView1<'_, f64>, bias: f64) -> (f64, Array1<f64>, f64) {
        let n = self.set.n() as f64;
        let zp = self.set.phi_plus().dot(&theta) + bias;
        let zm = self.set.phi_minus().dot(&theta) + bias;
        let mut loss = 0.0;
        let mut wp = Array1::zeros(zp.len());
        let mut wm = Array1::zeros(zm.len());
        for i in 0..zp.len() {
            let pp = sigmoid(zp[i]);
            let pm = sigmoid(zm[i]);
            let consistency = 1.0 - pp - pm;
            let plus_is_min = pp <= pm;
            let confidence = if plus_is_min { pp } else { pm };
            loss += consistency * consistency + confidence * confidence;
            let mut dpp = -2.0 * consistency;
            let mut dpm = -2.0 * consistency;
            if plus_is_min {
                dpp += 2.0 * pp;
            } else {
                dpm += 2.0 * pm;
            }
            wp[i] = dpp * pp * (1.0 - pp) / n;
            wm[i] = dpm * pm * (1.0 - pm) / n;
        }
        let grad = self.set.phi_plus().t().dot(&wp) + self.set.phi_minus().t().dot(&wm);
        (loss / n, grad, wp.sum() + wm.sum())
    }

    /// Mean BCE over all `2n` statements: `phi_plus` with target `y`,
    /// `phi_minus` with target `1 - y`.
    fn supervised(&self, labels: &[u8], theta: ArrayView1<'_, f64>, bias: f64) -> (f64, Array1<f64>, f64) {
        let count = 2.0 * self.set.n() as f64;
        let zp = self.set.phi_plus().dot(&theta) + bias;
        let zm = self.set.phi_minus().dot(&theta) + bias;
        let mut loss = 0.0;
        let mut wp = Array1::zeros(zp.len());
        let mut wm = Array1::zeros(zm.len());
        for (i, &y) in labels.iter().enumerate() {
            let y = f64::from(y);
            loss += softplus(zp[i]) - y * zp[i];
            loss += softplus(zm[i]) - (1.0 - y) * zm[i];
            wp[i] = (sigmoid(zp[i]) - y) / count;
            wm[i] = (sigmoid(zm[i]) - (1.0 - y)) / count;
        }
        let grad = self.set.phi_plus().t().dot(&wp) + self.set.phi_minus().t().dot(&wm);
        (loss / count, grad, wp.sum() + wm.sum())
    }
}

/// MA (`smr = false`) or SMR (`smr = true`) at a unit direction `t`, with
/// gradient with respect to `t`. Where `theta . u_i = 0` the absolute value
/// contributes subgradient 0; a zero std or zero RMS contributes gradient 0.
fn abs_loss_on_sphere(pairs: &PairStatistics, t: ArrayView1<'_, f64>, lambda: f64, coef: f64, smr: bool) -> (f64, Array1<f64>) {
    let n = pairs.n() as f64;
    let a = pairs.u.dot(&t);
    let (mu_abs, sigma) = abs_mean_std(&a);
    let sign = a.mapv(|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 });

    let sigma_weights = if sigma > 0.0 {
        Array1::from_iter(a.iter().zip(sign.iter()).map(|(x, s)| (x.abs() - mu_abs) * s / (n * sigma)))
    } else {
        Array1::zeros(a.len())
    };

    let (mean_value, mean_weights) = if smr {
        let rms = (a.dot(&a) / n).sqrt();
        let w = if rms > 0.0 { &a / (n * rms) } else { Array1::zeros(a.len()) };
        (rms, w)
    } else {
        (mu_abs, &sign / n)
    };

    let weights = coef * mean_weights + lambda * sigma_weights;
    (coef * mean_value + lambda * sigma, pairs.u.t().dot(&weights))
}
