//! Importance-sampled log-likelihood ratio shared by CD and MCMLE.
//!
//! With draws `g_s` at `θ_r` and target statistics `t`, the ratio at
//! `θ = θ_r + δ` is `δᵀt - ln mean_s exp(δᵀg_s)`. Everything here works on
//! the centered rows `d_s = g_s - t`, where it reads `-ln mean_s exp(δᵀd_s)`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{logsumexp, max_abs, solve_spd, weighted_moments};
use crate::model::dot;

#[derive(Clone, Debug)]
pub struct RatioEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Negative of the importance-weighted covariance.
    pub hessian: DMatrix<f64>,
    /// Normalized importance weights.
    pub weights: Vec<f64>,
}

/// `g_s - t` for every row.
pub fn center(stats: &[Vec<f64>], target: &[f64]) -> Vec<Vec<f64>> {
    stats.iter().map(|g| g.iter().zip(target).map(|(a, b)| a - b).collect()).collect()
}

pub fn evaluate(d: &[Vec<f64>], delta: &[f64]) -> RatioEval {
    let log_w: Vec<f64> = d.iter().map(|x| dot(delta, x)).collect();
    let lse = logsumexp(&log_w);
    let value = -(lse - (d.len() as f64).ln());
    let (mean, cov) = weighted_moments(d, &log_w);
    let weights = log_w.iter().map(|l| (l - lse).exp()).collect();
    RatioEval { value, gradient: -mean, hessian: -cov, weights }
}

/// Kish effective sample size of normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        weights.iter().sum::<f64>().powi(2) / s2
    } else {
        0.0
    }
}

/// Maximizes the ratio over `δ`, optionally inside `‖δ‖ ≤ radius`.
pub fn maximize(d: &[Vec<f64>], radius: Option<f64>) -> Vec<f64> {
    let k = d.first().map_or(0, Vec::len);
    let mut delta = vec![0.0; k];
    let mut cur = evaluate(d, &delta);
    let scale = d.iter().flat_map(|x| x.iter().map(|v| v.abs())).fold(1.0, f64::max);
    for _ in 0..200 {
        if max_abs(cur.gradient.iter().copied()) < 1e-10 * scale {
            break;
        }
        let info = -&cur.hessian;
        let mut ridge = 1e-10 * (0..k).map(|t| info[(t, t)]).fold(f64::MIN_POSITIVE, f64::max);
        let step = loop {
            if let Some(s) = solve_spd(&(&info + DMatrix::identity(k, k) * ridge), &cur.gradient) {
                break s;
            }
            ridge *= 100.0;
            if !ridge.is_finite() {
                return delta;
            }
        };
        let mut cand: Vec<f64> = delta.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
        if let Some(r) = radius {
            let norm = cand.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > r {
                cand.iter_mut().for_each(|c| *c *= r / norm);
            }
        }
        let mut accepted = None;
        for _ in 0..50 {
            let next = evaluate(d, &cand);
            let flat = next.value >= cur.value - 1e-15 * cur.value.abs()
                && max_abs(next.gradient.iter().copied()) < max_abs(cur.gradient.iter().copied());
            if next.value.is_finite() && (next.value > cur.value || flat) {
                accepted = Some(next);
                break;
            }
            for (c, a) in cand.iter_mut().zip(&delta) {
                *c = a + 0.5 * (*c - a);
            }
        }
        let Some(next) = accepted else { break };
        let moved = max_abs(cand.iter().zip(&delta).map(|(a, b)| a - b));
        delta = cand;
        cur = next;
        if moved < 1e-14 {
            break;
        }
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_origin() {
        let d = vec![vec![1.0, -2.0], vec![-0.5, 3.0], vec![0.25, 0.0]];
        let e = evaluate(&d, &[0.0, 0.0]);
        assert_eq!(e.value, 0.0);
        let mean: Vec<f64> = (0..2).map(|t| d.iter().map(|x| x[t]).sum::<f64>() / 3.0).collect();
        for t in 0..2 {
            assert!((e.gradient[t] + mean[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn one_dimensional_closed_form() {
        // Two-point sample {-1, +2} around the target: optimum where weights balance the mean.
        let d = vec![vec![-1.0], vec![2.0]];
        let delta = maximize(&d, None);
        // w(-1)·(-1) + w(2)·2 = 0  =>  e^{3δ} = 1/2.
        assert!((delta[0] - (0.5f64).ln() / 3.0).abs() < 1e-10, "{delta:?}");
        let capped = maximize(&d, Some(0.1));
        assert!((capped[0] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn ess_bounds() {
        assert!((effective_sample_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((effective_sample_size(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
