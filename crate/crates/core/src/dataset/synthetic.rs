// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic contrast pairs with a planted truth axis and a planted shared
//! midpoint (nuisance) axis.
//!
//! For label `y` with `s = +1` if `y = 1` else `-1`:
//!
//! ```text
//! phi_plus  =  s * signal * t + c * nuisance * g + eps_plus
//! phi_minus = -s * signal * t + c * nuisance * g + eps_minus
//! ```
//!
//! `t`, `g` are random orthonormal vectors, `c ~ N(0, 1)` per pair and `eps`
//! is isotropic Gaussian noise. Displacements concentrate on `t`, pair sums on
//! `g`.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ContrastActivationSet;
use crate::error::{ProbeError, Result};
use crate::prober::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub signal_scale: f64,
    pub nuisance_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 64,
            signal_scale: 1.0,
            nuisance_scale: 5.0,
            noise_scale: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d < 2 {
            return Err(ProbeError::validation(format!(
                "synthetic set needs n >= 2 and d >= 2, got n={}, d={}",
                self.n, self.d
            )));
        }
        for (name, v) in [
            ("signal_scale", self.signal_scale),
            ("nuisance_scale", self.nuisance_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ProbeError::validation(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub set: ContrastActivationSet,
    pub truth_direction: Direction,
    pub nuisance_direction: Direction,
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Two orthonormal vectors by Gram-Schmidt on Gaussian draws.
fn orthonormal_pair(rng: &mut ChaCha8Rng, d: usize) -> (Array1<f64>, Array1<f64>) {
    loop {
        let a = gaussian_vector(rng, d);
        let b = gaussian_vector(rng, d);
        let na = a.dot(&a).sqrt();
        if na < 1e-8 {
            continue;
        }
        let t = a / na;
        let b = &b - &(&t * t.dot(&b));
        let nb = b.dot(&b).sqrt();
        if nb < 1e-8 {
            continue;
        }
        return (t, b / nb);
    }
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let SyntheticConfig { n, d, .. } = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (t, g) = orthonormal_pair(&mut rng, d);

    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    labels.shuffle(&mut rng);

    let mut phi_plus = Array2::zeros((n, d));
    let mut phi_minus = Array2::zeros((n, d));
    for i in 0..n {
        let s = if labels[i] == 1 { 1.0 } else { -1.0 };
        let c: f64 = rng.sample(StandardNormal);
        let eps_plus = gaussian_vector(&mut rng, d);
        let eps_minus = gaussian_vector(&mut rng, d);
        for j in 0..d {
            let truth = s * config.signal_scale * t[j];
            let shared = c * config.nuisance_scale * g[j];
            phi_plus[[i, j]] = truth + shared + config.noise_scale * eps_plus[j];
            phi_minus[[i, j]] = -truth + shared + config.noise_scale * eps_minus[j];
        }
    }

    let mut set = ContrastActivationSet::new(phi_plus, phi_minus, Some(labels))?;
    set.insert_meta("source", "synthetic");
    set.insert_meta("synthetic_seed", config.seed.to_string());
    set.insert_meta(
        "synthetic_scales",
        format!(
            "signal={},nuisance={},noise={}",
            config.signal_scale, config.nuisance_scale, config.noise_scale
        ),
    );
    Ok(SyntheticSet {
        set,
        truth_direction: Direction::new(t)?,
        nuisance_direction: Direction::new(g)?,
    })
}
