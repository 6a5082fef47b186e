//! Small dense helpers over `nalgebra` for k x k systems.

use nalgebra::{DMatrix, DVector};

/// Numerically stable `ln Σ exp(x)`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Solves `a x = b` for symmetric positive definite `a`; `None` if not PD.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = a.clone().cholesky()?.inverse();
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// `sqrt(diag(inverse(a)))`, or `None` when `a` is not positive definite.
pub fn inverse_sqrt_diag(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let inv = inverse_spd(a)?;
    let se: Vec<f64> = (0..a.nrows()).map(|t| inv[(t, t)].sqrt()).collect();
    se.iter().all(|v| v.is_finite() && *v > 0.0).then_some(se)
}

/// Weighted mean and covariance of the rows of `xs` given log-weights.
pub fn weighted_moments(xs: &[Vec<f64>], log_w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = xs.first().map_or(0, Vec::len);
    let lse = logsumexp(log_w);
    let w: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
    let mut mean = DVector::zeros(k);
    for (x, &wi) in xs.iter().zip(&w) {
        for t in 0..k {
            mean[t] += wi * x[t];
        }
    }
    let mut cov = DMatrix::zeros(k, k);
    for (x, &wi) in xs.iter().zip(&w) {
        if wi == 0.0 {
            continue;
        }
        for a in 0..k {
            let da = x[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += wi * da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mean, cov)
}

pub fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
