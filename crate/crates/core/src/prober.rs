// SPDX-License-Identifier: MIT OR Apache-2.0

//! The linear prober `p(phi) = sigmoid(theta . phi + b)`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

/// Tolerance on `| |theta| - 1 |` for unit-norm probers and directions.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Norms at or below this cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Unconstrained,
    UnitNorm,
}

/// Logistic function in the branch-stable form.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(ProbeError::DimensionMismatch { expected, actual })
    }
}

/// A unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Array1<f64>);

impl Direction {
    /// Normalizes `v`; fails on a (near-)zero vector.
    pub fn new(v: Array1<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(ProbeError::validation("direction of dimension 0"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ProbeError::validation("direction has non-finite entries"));
        }
        let n = norm(v.view());
        if n <= MIN_NORM {
            return Err(ProbeError::ZeroVector);
        }
        Ok(Self(v / n))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(Array1::from(v.to_vec()))
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub fn cosine(&self, other: &Direction) -> Result<f64> {
        check_dim(self.d(), other.d())?;
        Ok(self.0.dot(&other.0).clamp(-1.0, 1.0))
    }

    pub fn negated(&self) -> Self {
        Self(-&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prober {
    theta: Array1<f64>,
    bias: f64,
    constraint: Constraint,
}

impl Prober {
    pub fn new(theta: Array1<f64>, bias: f64, constraint: Constraint) -> Result<Self> {
        if theta.is_empty() {
            return Err(ProbeError::validation("prober of dimension 0"));
        }
        if theta.iter().any(|x| !x.is_finite()) || !bias.is_finite() {
            return Err(ProbeError::validation("prober has non-finite parameters"));
        }
        if constraint == Constraint::UnitNorm {
            let n = norm(theta.view());
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(ProbeError::validation(format!(
                    "unit-norm prober has |theta| = {n}"
                )));
            }
            if bias != 0.0 {
                return Err(ProbeError::validation("unit-norm prober must have zero bias"));
            }
        }
        Ok(Self {
            theta,
            bias,
            constraint,
        })
    }

    pub fn unconstrained(theta: Array1<f64>, bias: f64) -> Result<Self> {
        Self::new(theta, bias, Constraint::Unconstrained)
    }

    pub fn from_direction(direction: &Direction) -> Self {
        Self {
            theta: direction.as_array().clone(),
            bias: 0.0,
            constraint: Constraint::UnitNorm,
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            theta: Array1::zeros(d),
            bias: 0.0,
            constraint: Constraint::Unconstrained,
        }
    }

    /// Entries i.i.d. `N(0, 1/d)`, zero bias, renormalized for `UnitNorm`.
    pub fn random_init(d: usize, seed: u64, constraint: Constraint) -> Result<Self> {
        if d == 0 {
            return Err(ProbeError::validation("prober of dimension 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let theta = Array1::from_iter((0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
        let prober = Self::unconstrained(theta, 0.0)?;
        match constraint {
            Constraint::Unconstrained => Ok(prober),
            Constraint::UnitNorm => prober.project_unit(),
        }
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn logit(&self, phi: ArrayView1<'_, f64>) -> Result<f64> {
        check_dim(self.d(), phi.len())?;
        Ok(self.theta.dot(&phi) + self.bias)
    }

    pub fn predict(&self, phi: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(sigmoid(self.logit(phi)?))
    }

    /// Mean of `p(phi_plus)` and `1 - p(phi_minus)`.
    pub fn pair_score(&self, phi_plus: ArrayView1<'_, f64>, phi_minus: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(0.5 * (self.predict(phi_plus)? + (1.0 - self.predict(phi_minus)?)))
    }

    /// `theta / |theta|` with the bias dropped.
    pub fn project_unit(&self) -> Result<Prober> {
        let direction = self.direction()?;
        Ok(Prober::from_direction(&direction))
    }

    pub fn direction(&self) -> Result<Direction> {
        Direction::new(self.theta.clone())
    }

    pub fn negated(&self) -> Self {
        Self {
            theta: -&self.theta,
            bias: -self.bias,
            constraint: self.constraint,
        }
    }
}

/// JSON form of a prober and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProberRecord {
    pub d: usize,
    pub theta: Vec<f64>,
    pub bias: f64,
    pub constraint: Constraint,
    pub seed: Option<u64>,
    /// One of `ccs`, `md`, `ma`, `smr`, `supervised`, `pca`, `random`, `manual`.
    pub loss_variant: String,
    pub lambda: Option<f64>,
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl ProberRecord {
    pub fn new(prober: &Prober, loss_variant: impl Into<String>) -> Self {
        Self {
            d: prober.d(),
            theta: prober.theta().to_vec(),
            bias: prober.bias(),
            constraint: prober.constraint(),
            seed: None,
            loss_variant: loss_variant.into(),
            lambda: None,
            final_loss: None,
            sign_mode: None,
            config_digest: None,
        }
    }

    pub fn prober(&self) -> Result<Prober> {
        if self.theta.len() != self.d {
            return Err(ProbeError::DimensionMismatch {
                expected: self.d,
                actual: self.theta.len(),
            });
        }
        Prober::new(Array1::from(self.theta.clone()), self.bias, self.constraint)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| ProbeError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| ProbeError::io(path, e))?;
        let record: Self = serde_json::from_slice(&bytes)?;
        record.prober()?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn predict_examples() {
        let zero = Prober::zeros(3);
        assert_eq!(zero.predict(array![1.0, -2.0, 9.0].view()).unwrap(), 0.5);
        let e1 = Prober::unconstrained(array![1.0, 0.0], 0.0).unwrap();
        assert_eq!(e1.predict(array![0.0, 7.0].view()).unwrap(), 0.5);
        let p = e1.predict(array![3f64.ln(), 0.0].view()).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        assert!(e1.predict(array![1.0].view()).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1e4), 1.0);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert!(sigmoid(-745.0) > 0.0);
        assert!(sigmoid(f64::MAX).is_finite());
    }

    #[test]
    fn pair_score_examples() {
        // logit(0.9) and logit(0.2) on a scalar prober with theta = 1.
        let one = Prober::unconstrained(array![1.0], 0.0).unwrap();
        let lp = (0.9f64 / 0.1).ln();
        let lm = (0.2f64 / 0.8).ln();
        let s = one.pair_score(array![lp].view(), array![lm].view()).unwrap();
        assert!((s - 0.85).abs() < 1e-12);
        let zero = Prober::zeros(1);
        assert_eq!(zero.pair_score(array![4.0].view(), array![-3.0].view()).unwrap(), 0.5);
        assert_eq!(one.pair_score(array![1.3].view(), array![1.3].view()).unwrap(), 0.5);
    }

    #[test]
    fn random_init_is_deterministic_and_unit_when_asked() {
        let a = Prober::random_init(16, 5, Constraint::UnitNorm).unwrap();
        assert_eq!(a, Prober::random_init(16, 5, Constraint::UnitNorm).unwrap());
        assert!((a.theta().dot(a.theta()).sqrt() - 1.0).abs() <= 1e-9);
        assert_eq!(a.bias(), 0.0);
        let b = Prober::random_init(16, 5, Constraint::Unconstrained).unwrap();
        assert_eq!(b.bias(), 0.0);
    }

    #[test]
    fn random_directions_are_nearly_orthogonal_in_high_dimension() {
        // |cos| of independent uniform directions in d = 1024 has std ~ 0.031;
        // 0.2 is more than six standard deviations.
        let worst = (0..1000u64)
            .map(|s| {
                let a = Prober::random_init(1024, 2 * s, Constraint::UnitNorm).unwrap();
                let b = Prober::random_init(1024, 2 * s + 1, Constraint::UnitNorm).unwrap();
                a.theta().dot(b.theta()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.2, "max |cos| = {worst}");
    }

    #[test]
    fn project_unit_examples() {
        let p = Prober::unconstrained(array![3.0, 4.0], 2.0).unwrap().project_unit().unwrap();
        assert!((p.theta()[0] - 0.6).abs() < 1e-15 && (p.theta()[1] - 0.8).abs() < 1e-15);
        assert_eq!(p.bias(), 0.0);
        assert_eq!(p.constraint(), Constraint::UnitNorm);
        let again = p.project_unit().unwrap();
        assert!((again.theta() - p.theta()).iter().all(|x| x.abs() <= 1e-12));
        assert!(matches!(Prober::zeros(2).project_unit(), Err(ProbeError::ZeroVector)));
        assert!(matches!(Prober::zeros(2).direction(), Err(ProbeError::ZeroVector)));
        let d = Prober::unconstrained(array![3.0, 4.0], 0.0).unwrap().direction().unwrap();
        assert!((d.as_array()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_norm_invariant_is_enforced() {
        assert!(Prober::new(array![1.0, 1.0], 0.0, Constraint::UnitNorm).is_err());
        assert!(Prober::new(array![1.0, 0.0], 0.5, Constraint::UnitNorm).is_err());
        assert!(Prober::new(array![f64::NAN], 0.0, Constraint::Unconstrained).is_err());
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Prober::unconstrained(array![0.1, -0.7, 1.0 / 3.0], 0.25).unwrap();
        let mut rec = ProberRecord::new(&p, "ccs");
        rec.seed = Some(4);
        rec.final_loss = Some(0.123456789);
        let path = dir.path().join("p.json");
        rec.save(&path).unwrap();
        let back = ProberRecord::load(&path).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.prober().unwrap(), p);
    }

    proptest! {
        #[test]
        fn predict_flip_symmetry(theta in prop::collection::vec(-5.0f64..5.0, 3),
                                 phi in prop::collection::vec(-5.0f64..5.0, 3),
                                 b in -5.0f64..5.0) {
            let p = Prober::unconstrained(Array1::from(theta), b).unwrap();
            let phi = Array1::from(phi);
            let s = p.predict(phi.view()).unwrap() + p.negated().predict(phi.view()).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn pair_score_antisymmetry(theta in prop::collection::vec(-5.0f64..5.0, 3),
                                   a in prop::collection::vec(-5.0f64..5.0, 3),
                                   c in prop::collection::vec(-5.0f64..5.0, 3),
                                   b in -5.0f64..5.0) {
            let p = Prober::unconstrained(Array1::from(theta), b).unwrap();
            let (a, c) = (Array1::from(a), Array1::from(c));
            let s = p.pair_score(a.view(), c.view()).unwrap() + p.pair_score(c.view(), a.view()).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn predict_is_monotone_in_logit(z1 in -50.0f64..50.0, z2 in -50.0f64..50.0) {
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(sigmoid(lo) <= sigmoid(hi));
        }

        #[test]
        fn project_unit_is_idempotent(theta in prop::collection::vec(-5.0f64..5.0, 4)) {
            prop_assume!(theta.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let p = Prober::unconstrained(Array1::from(theta), 1.0).unwrap().project_unit().unwrap();
            let q = p.project_unit().unwrap();
            prop_assert!((p.theta() - q.theta()).iter().all(|x| x.abs() <= 1e-12));
        }
    }
}
