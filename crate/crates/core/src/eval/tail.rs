// SPDX-License-Identifier: MIT OR Apache-2.0

//! Upper tail of the cosine between two independent uniform unit vectors.

use statrs::function::gamma::ln_gamma;

use crate::error::{ProbeError, Result};

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;

/// `ln I_x(a, b)`, the natural log of the regularized incomplete beta function.
///
/// The prefactor `x^a (1-x)^b / (a B(a, b))` is kept in log space so the
/// result stays finite far below the smallest positive double.
pub fn ln_regularized_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(ProbeError::validation("beta parameters must be positive"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(ProbeError::validation(format!("x = {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front(x, a, b) + continued_fraction(x, a, b)?.ln() - a.ln())
    } else {
        let ln_complement = ln_front(x, a, b) + continued_fraction(1.0 - x, b, a)?.ln() - b.ln();
        Ok((-ln_complement.exp()).ln_1p())
    }
}

fn ln_front(x: f64, a: f64, b: f64) -> f64 {
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    a * x.ln() + b * (1.0 - x).ln() - ln_beta
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn continued_fraction(x: f64, a: f64, b: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(ProbeError::NotConverged {
        iterations: CF_MAX_ITER,
        residual: f64::NAN,
    })
}

/// `log10 P(cos >= c)` for two independent uniform unit vectors in `R^d`:
/// `P = I_{1-c^2}((d-1)/2, 1/2) / 2`.
pub fn random_cosine_tail(d: usize, c: f64) -> Result<f64> {
    if d < 2 {
        return Err(ProbeError::validation("dimension must be at least 2"));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(ProbeError::validation(format!("cosine threshold {c} not in (0, 1)")));
    }
    let ln_i = ln_regularized_beta(1.0 - c * c, (d as f64 - 1.0) / 2.0, 0.5)?;
    Ok((ln_i - std::f64::consts::LN_2) / std::f64::consts::LN_10)
}
