// SPDX-License-Identifier: MIT OR Apache-2.0

//! Analytic gradients against central differences of the formula losses in
//! the oracle crate.

use mdprobe::losses::{gradient, loss_value};
use mdprobe::{ContrastActivationSet, LossSpec, Prober, SignMode};
use mdprobe_oracles::{central_difference, gaussian_vec, relative_error, Loss, Pairs};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;

struct Instance {
    pairs: Pairs,
    theta: Vec<f64>,
    bias: f64,
    lambda: f64,
}

impl Instance {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..=20);
        let d = rng.random_range(1..=8);
        let plus = (0..n).map(|_| gaussian_vec(rng, d)).collect();
        let minus = (0..n).map(|_| gaussian_vec(rng, d)).collect();
        let theta = gaussian_vec(rng, d);
        Self {
            pairs: Pairs {
                plus,
                minus,
                labels: (0..n).map(|_| rng.random_range(0..=1u8)).collect(),
            },
            theta,
            bias: rng.sample(StandardNormal),
            lambda: rng.random_range(0.0..0.999),
        }
    }

    fn set(&self) -> ContrastActivationSet {
        let n = self.pairs.n();
        let d = self.theta.len();
        let flat = |rows: &Vec<Vec<f64>>| Array2::from_shape_vec((n, d), rows.concat()).unwrap();
        ContrastActivationSet::new(flat(&self.pairs.plus), flat(&self.pairs.minus), Some(self.pairs.labels.clone()))
            .unwrap()
    }
}

fn oracle_loss(spec: &LossSpec) -> Loss {
    match *spec {
        LossSpec::Ccs => Loss::Ccs,
        LossSpec::Supervised => Loss::Supervised,
        LossSpec::Md { lambda } => Loss::Md { lambda },
        LossSpec::Ma { lambda, sign_mode } => Loss::Ma {
            lambda,
            literal: sign_mode == SignMode::Literal,
        },
        LossSpec::Smr { lambda, sign_mode } => Loss::Smr {
            lambda,
            literal: sign_mode == SignMode::Literal,
        },
    }
}

fn specs(lambda: f64) -> Vec<LossSpec> {
    vec![
        LossSpec::Ccs,
        LossSpec::Md { lambda },
        LossSpec::Ma { lambda, sign_mode: SignMode::Literal },
        LossSpec::Ma { lambda, sign_mode: SignMode::MdConsistent },
        LossSpec::Smr { lambda, sign_mode: SignMode::Literal },
        LossSpec::Smr { lambda, sign_mode: SignMode::MdConsistent },
        LossSpec::Supervised,
    ]
}

#[test]
fn library_losses_match_formula_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let inst = Instance::draw(&mut rng);
        let set = inst.set();
        for spec in specs(inst.lambda) {
            let got = loss_value(&spec, Array1::from(inst.theta.clone()).view(), inst.bias, &set).unwrap();
            let want = inst.pairs.loss(oracle_loss(&spec), &inst.theta, inst.bias);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{spec:?}: {got} vs {want}");
        }
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let inst = Instance::draw(&mut rng);
        let set = inst.set();
        let prober = Prober::unconstrained(Array1::from(inst.theta.clone()), inst.bias).unwrap();
        for spec in specs(inst.lambda) {
            let (g, gb) = gradient(&spec, &prober, &set).unwrap();
            let mut analytic = g.to_vec();
            analytic.push(gb);

            let mut params = inst.theta.clone();
            params.push(inst.bias);
            let f = |p: &[f64]| inst.pairs.loss(oracle_loss(&spec), &p[..p.len() - 1], p[p.len() - 1]);
            let numeric = central_difference(f, &params, H);
            let err = relative_error(&analytic, &numeric);
            assert!(err <= 1e-6, "{spec:?}: relative error {err}");
        }
    }
}
