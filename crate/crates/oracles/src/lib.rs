// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reference computations for testing mdprobe. Nothing here depends on the
//! library under test: losses are written out from their formulas, spectra
//! come from nalgebra's dense symmetric eigensolver, and tail probabilities
//! from quadrature or sampling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).abs() / (norm(a) * norm(b))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Loss families, spelled independently of the library's own enum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Ccs,
    Supervised,
    Md { lambda: f64 },
    /// `literal` selects the `1 - lambda` coefficient, else `lambda - 1`.
    Ma { lambda: f64, literal: bool },
    Smr { lambda: f64, literal: bool },
}

/// Contrast pairs as plain rows.
#[derive(Debug, Clone)]
pub struct Pairs {
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Pairs {
    pub fn n(&self) -> usize {
        self.plus.len()
    }

    /// Projections of `u` and `v` on `theta / |theta|`.
    fn unit_projections(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = theta.iter().map(|x| x / norm(theta)).collect();
        let a = self.plus.iter().zip(&self.minus).map(|(p, m)| dot(p, &t) - dot(m, &t)).collect();
        let b = self.plus.iter().zip(&self.minus).map(|(p, m)| dot(p, &t) + dot(m, &t)).collect();
        (a, b)
    }

    /// The loss at `(theta, bias)` straight from its definition.
    pub fn loss(&self, loss: Loss, theta: &[f64], bias: f64) -> f64 {
        let n = self.n() as f64;
        match loss {
            Loss::Ccs => {
                let mut total = 0.0;
                for (p, m) in self.plus.iter().zip(&self.minus) {
                    let pp = sigmoid(dot(theta, p) + bias);
                    let pm = sigmoid(dot(theta, m) + bias);
                    total += (1.0 - pp - pm).powi(2) + pp.min(pm).powi(2);
                }
                total / n
            }
            Loss::Supervised => {
                let mut total = 0.0;
                for ((p, m), &y) in self.plus.iter().zip(&self.minus).zip(&self.labels) {
                    let y = f64::from(y);
                    let pp = sigmoid(dot(theta, p) + bias);
                    let pm = sigmoid(dot(theta, m) + bias);
                    total -= y * pp.ln() + (1.0 - y) * (1.0 - pp).ln();
                    total -= (1.0 - y) * pm.ln() + y * (1.0 - pm).ln();
                }
                total / (2.0 * n)
            }
            Loss::Md { lambda } => {
                let (a, b) = self.unit_projections(theta);
                let sd = a.iter().map(|x| x * x).sum::<f64>() / n;
                let sm = b.iter().map(|x| x * x).sum::<f64>() / n;
                (lambda - 1.0) * sd + lambda * sm
            }
            Loss::Ma { lambda, literal } | Loss::Smr { lambda, literal } => {
                let (a, _) = self.unit_projections(theta);
                let abs: Vec<f64> = a.iter().map(|x| x.abs()).collect();
                let c = if literal { 1.0 - lambda } else { lambda - 1.0 };
                let location = if matches!(loss, Loss::Smr { .. }) {
                    (a.iter().map(|x| x * x).sum::<f64>() / n).sqrt()
                } else {
                    mean(&abs)
                };
                c * location + lambda * pop_std(&abs)
            }
        }
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += h;
            lo[k] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-8)` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Haar-ish random orthogonal matrix from a QR factorization.
pub fn rotation(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    gaussian(rng, d, d).qr().q()
}

/// Rows with independent Gaussian coordinates scaled by `scales`, then rotated.
pub fn rotated_gaussian_rows(rng: &mut ChaCha8Rng, n: usize, scales: &[f64]) -> DMatrix<f64> {
    let d = scales.len();
    gaussian(rng, n, d) * DMatrix::from_diagonal(&DVector::from_column_slice(scales)) * rotation(rng, d)
}

/// `(1/n) X^T X`, optionally after centering each column.
pub fn second_moment(x: &DMatrix<f64>, center: bool) -> DMatrix<f64> {
    let mut x = x.clone();
    if center {
        for j in 0..x.ncols() {
            let m = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-m);
        }
    }
    x.transpose() * &x / x.nrows() as f64
}

/// Eigenvector of the largest (`top`) or smallest eigenvalue, and the gap to
/// the next eigenvalue in that order.
pub fn extreme_eigenvector(m: &DMatrix<f64>, top: bool) -> (Vec<f64>, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if top {
        order.reverse();
    }
    let gap = if order.len() > 1 {
        (eig.eigenvalues[order[0]] - eig.eigenvalues[order[1]]).abs()
    } else {
        f64::INFINITY
    };
    (eig.eigenvectors.column(order[0]).iter().copied().collect(), gap)
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `log10 P(cos >= c)` for a uniform direction in `d` dimensions, by Simpson
/// quadrature in log space of the angle density `sin^(d-2)(phi)` over
/// `[0, acos c]` against `[0, pi]`.
pub fn cosine_tail_by_quadrature(d: usize, c: f64) -> f64 {
    let e = d as f64 - 2.0;
    let log_integral = |hi: f64| {
        let m = 200_000;
        let h = hi / m as f64;
        let terms: Vec<f64> = (0..=m)
            .map(|k| {
                let w: f64 = if k == 0 || k == m {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let s = (h * k as f64).sin();
                if e == 0.0 {
                    w.ln()
                } else if s <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w.ln() + e * s.ln()
                }
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln() + (h / 3.0).ln()
    };
    (log_integral(c.clamp(-1.0, 1.0).acos()) - log_integral(std::f64::consts::PI)) / std::f64::consts::LN_10
}

/// Mean `|cos|` between `trials` pairs of independent Gaussian directions.
pub fn monte_carlo_mean_abs_cosine(rng: &mut ChaCha8Rng, d: usize, trials: usize) -> f64 {
    let mut total = 0.0;
    for _ in 0..trials {
        let a = gaussian_vec(rng, d);
        let b = gaussian_vec(rng, d);
        total += abs_cos(&a, &b);
    }
    total / trials as f64
}
