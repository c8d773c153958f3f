// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-form direction finders: the leading principal component of the pair
//! displacements, and of the pooled statement activations.

use ndarray::{Array1, Array2, ArrayView2, Axis, concatenate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::ContrastActivationSet;
use crate::error::{ProbeError, Result};
use crate::prober::Direction;

pub const PCA_TOL: f64 = 1e-10;
pub const PCA_MAX_ITER: usize = 10_000;

/// `(1/n) sum_i (x_i - mean)(x_i - mean)^T`.
pub fn centered_second_moment(rows: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = rows.nrows() as f64;
    let mean = rows.sum_axis(Axis(0)) / n;
    let centered = &rows - &mean;
    centered.t().dot(&centered) / n
}

/// Leading eigenvector and eigenvalue of a symmetric positive semi-definite
/// matrix by power iteration.
///
/// Stops once `|M v - rho v| <= tol * rho` with `rho` the Rayleigh quotient.
/// The start vector is a fixed pseudo-random draw, so results are
/// reproducible. The sign is normalized so the first non-negligible
/// coordinate is positive.
pub fn top_eigenvector(matrix: &Array2<f64>, tol: f64, max_iter: usize) -> Result<(Array1<f64>, f64)> {
    let d = matrix.nrows();
    if d == 0 || matrix.ncols() != d {
        return Err(ProbeError::validation("power iteration needs a square, non-empty matrix"));
    }
    let scale = matrix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(ProbeError::validation("power iteration on a zero or non-finite matrix"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x0005_eed0_f9ca);
    let mut v = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    v /= v.dot(&v).sqrt();

    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let w = matrix.dot(&v);
        let rho = v.dot(&w);
        residual = (&w - &(&v * rho)).dot(&(&w - &(&v * rho))).sqrt();
        if residual <= tol * rho.abs().max(f64::MIN_POSITIVE) {
            return Ok((fix_sign(v), rho));
        }
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return Err(ProbeError::validation("power iteration collapsed to the zero vector"));
        }
        v = w / norm;
    }
    Err(ProbeError::NotConverged {
        iterations: max_iter,
        residual,
    })
}

fn fix_sign(mut v: Array1<f64>) -> Array1<f64> {
    let cutoff = 1e-12 * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > cutoff) {
        if *first < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
    v
}

/// Leading principal component of the (mean-centered) displacements
/// `u_i = phi_plus_i - phi_minus_i`.
pub fn pca_direction(set: &ContrastActivationSet) -> Result<Direction> {
    if set.n() < 2 {
        return Err(ProbeError::validation("PCA needs at least 2 pairs"));
    }
    let u = &set.phi_plus() - &set.phi_minus();
    if u.iter().all(|&x| x == 0.0) {
        return Err(ProbeError::validation("all displacements are zero"));
    }
    let (v, _) = top_eigenvector(&centered_second_moment(u.view()), PCA_TOL, PCA_MAX_ITER)?;
    Direction::new(v)
}

/// Leading principal component of the `2n` statement activations pooled
/// from both sets.
pub fn statement_pc1(set: &ContrastActivationSet) -> Result<Direction> {
    let pooled = concatenate(Axis(0), &[set.phi_plus(), set.phi_minus()])
        .expect("both sets share the column count");
    let (v, _) = top_eigenvector(&centered_second_moment(pooled.view()), PCA_TOL, PCA_MAX_ITER)?;
    Direction::new(v)
}
