//! Exact computations by brute-force enumeration of tiny capped supports.
//!
//! Test and reference use only. Enumeration is limited to `n <= 3`,
//! `cap <= 5` and at most 10^8 graphs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CountGraph;
use crate::linalg::{logsumexp, max_abs, solve_spd};
use crate::model::{dot, ModelSpec};

pub const MAX_NODES: usize = 3;
pub const MAX_CAP: u32 = 5;
pub const MAX_SUPPORT: u64 = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumSpec {
    pub n: usize,
    pub cap: u32,
}

impl EnumSpec {
    pub fn new(n: usize, cap: u32) -> Result<Self> {
        let spec = Self { n, cap };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if !(2..=MAX_NODES).contains(&self.n) {
            return Err(Error::Guard(format!("n = {} outside 2..={MAX_NODES}", self.n)));
        }
        if !(1..=MAX_CAP).contains(&self.cap) {
            return Err(Error::Guard(format!("cap = {} outside 1..={MAX_CAP}", self.cap)));
        }
        if self.support_size() > MAX_SUPPORT {
            return Err(Error::Guard(format!("support of {} graphs exceeds {MAX_SUPPORT}", self.support_size())));
        }
        Ok(())
    }

    /// `(cap + 1)^(n(n-1))`.
    pub fn support_size(&self) -> u64 {
        (self.cap as u64 + 1).saturating_pow((self.n * (self.n - 1)) as u32)
    }

    /// Position of `g` in the order produced by [`enumerate_support`].
    pub fn index_of(&self, g: &CountGraph) -> usize {
        let base = self.cap as usize + 1;
        g.dyads().rev().fold(0, |acc, (i, j)| acc * base + g.get(i, j) as usize)
    }
}

/// Every graph on the support exactly once; the first dyad varies fastest.
pub fn enumerate_support(spec: EnumSpec) -> Result<impl Iterator<Item = CountGraph>> {
    spec.check()?;
    let template = CountGraph::empty(spec.n)?;
    let dyads: Vec<(usize, usize)> = template.dyads().collect();
    let total = spec.support_size();
    let base = spec.cap as u64 + 1;
    Ok((0..total).map(move |mut idx| {
        let mut g = template.clone();
        for &(i, j) in &dyads {
            g.set(i, j, (idx % base) as u32);
            idx /= base;
        }
        g
    }))
}

/// Enumerated statistics and reference weights of a model on a capped support.
#[derive(Clone, Debug)]
pub struct ExactModel {
    spec: EnumSpec,
    k: usize,
    stats: Vec<f64>,
    log_h: Vec<f64>,
}

impl ExactModel {
    pub fn new(model: &ModelSpec, spec: EnumSpec) -> Result<Self> {
        spec.check()?;
        if model.support().cap != Some(spec.cap) {
            return Err(Error::Domain(format!(
                "model support cap {:?} does not match enumeration cap {}",
                model.support().cap,
                spec.cap
            )));
        }
        let k = model.k();
        let mut stats = Vec::with_capacity(spec.support_size() as usize * k);
        let mut log_h = Vec::with_capacity(spec.support_size() as usize);
        for g in enumerate_support(spec)? {
            model.check_graph(&g)?;
            stats.extend(model.suff_stats(&g));
            log_h.push(model.log_reference(&g));
        }
        Ok(Self { spec, k, stats, log_h })
    }

    pub fn spec(&self) -> EnumSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.log_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_h.is_empty()
    }

    pub fn stats_of(&self, idx: usize) -> &[f64] {
        &self.stats[idx * self.k..(idx + 1) * self.k]
    }

    pub fn log_potentials(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|s| dot(theta, self.stats_of(s)) + self.log_h[s]).collect()
    }

    pub fn log_normalizer(&self, theta: &[f64]) -> f64 {
        logsumexp(&self.log_potentials(theta))
    }

    /// Probability of every support graph, in enumeration order.
    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let lp = self.log_potentials(theta);
        let z = logsumexp(&lp);
        lp.iter().map(|l| (l - z).exp()).collect()
    }

    /// Mean and covariance of the sufficient statistics under `theta`.
    pub fn moments(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.probabilities(theta);
        let k = self.k;
        let mut mean = DVector::zeros(k);
        for (s, &ps) in p.iter().enumerate() {
            for (t, v) in self.stats_of(s).iter().enumerate() {
                mean[t] += ps * v;
            }
        }
        let mut cov = DMatrix::zeros(k, k);
        for (s, &ps) in p.iter().enumerate() {
            let x = self.stats_of(s);
            for a in 0..k {
                for b in 0..k {
                    cov[(a, b)] += ps * (x[a] - mean[a]) * (x[b] - mean[b]);
                }
            }
        }
        (mean, cov)
    }

    /// Exact log-likelihood of observed statistics (up to the constant `ln h(y_obs)`).
    pub fn log_likelihood(&self, obs: &[f64], theta: &[f64]) -> f64 {
        dot(theta, obs) - self.log_normalizer(theta)
    }

    /// Exact draw by inversion.
    pub fn sample<R: Rng>(&self, theta: &[f64], rng: &mut R) -> CountGraph {
        let p = self.probabilities(theta);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = p.len() - 1;
        for (s, ps) in p.iter().enumerate() {
            acc += ps;
            if u < acc {
                idx = s;
                break;
            }
        }
        self.graph_at(idx)
    }

    pub fn graph_at(&self, mut idx: usize) -> CountGraph {
        let mut g = CountGraph::empty(self.spec.n).expect("n >= 2");
        let base = self.spec.cap as usize + 1;
        let dyads: Vec<_> = g.dyads().collect();
        for (i, j) in dyads {
            g.set(i, j, (idx % base) as u32);
            idx /= base;
        }
        g
    }

    /// Newton maximization of the exact likelihood.
    pub fn mle(&self, obs: &[f64]) -> Result<ExactMle> {
        for t in 0..self.k {
            let (lo, hi) = (0..self.len())
                .map(|s| self.stats_of(s)[t])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if obs[t] <= lo || obs[t] >= hi {
                return Err(Error::NonExistence(format!(
                    "statistic {t} = {} lies on the boundary [{lo}, {hi}] of its range",
                    obs[t]
                )));
            }
        }
        let mut theta = vec![0.0; self.k];
        for _ in 0..500 {
            let (mean, cov) = self.moments(&theta);
            let grad = DVector::from_iterator(self.k, obs.iter().zip(mean.iter()).map(|(o, m)| o - m));
            if max_abs(grad.iter().copied()) < 1e-10 {
                return finish(theta, cov);
            }
            let step = solve_spd(&cov, &grad)
                .ok_or_else(|| Error::Singular("exact Fisher information is singular".into()))?;
            let f0 = self.log_likelihood(obs, &theta);
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let next = loop {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
                let f = self.log_likelihood(obs, &cand);
                if f >= f0 + 1e-4 * t * slope || t < 1e-12 {
                    break cand;
                }
                t *= 0.5;
            };
            if max_abs(next.iter().copied()) > 1e3 {
                return Err(Error::NonExistence("coefficients diverge; observed statistics are on the hull boundary".into()));
            }
            if next == theta {
                let (mean, cov) = self.moments(&theta);
                if max_abs(obs.iter().zip(mean.iter()).map(|(o, m)| o - m)) < 1e-9 {
                    return finish(theta, cov);
                }
                break;
            }
            theta = next;
        }
        Err(Error::NonExistence("exact Newton iteration did not converge".into()))
    }
}

/// A fit whose distribution has collapsed onto a face of the hull is a boundary point.
fn finish(theta: Vec<f64>, cov: DMatrix<f64>) -> Result<ExactMle> {
    let k = cov.nrows();
    let d: Vec<f64> = (0..k).map(|t| cov[(t, t)].max(0.0).sqrt()).collect();
    let scaled = DMatrix::from_fn(k, k, |a, b| cov[(a, b)] / (d[a] * d[b]));
    let min_eig = scaled.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eig > 1e-8) {
        return Err(Error::NonExistence("observed statistics lie on a face of the convex hull".into()));
    }
    Ok(ExactMle { theta, fisher: cov })
}

#[derive(Clone, Debug)]
pub struct ExactMle {
    pub theta: Vec<f64>,
    /// Covariance of the statistics at the MLE (Fisher information).
    pub fisher: DMatrix<f64>,
}

impl ExactMle {
    /// Standard errors from the inverse Fisher information.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        crate::linalg::inverse_sqrt_diag(&self.fisher)
    }
}

pub fn exact_log_normalizer(model: &ModelSpec, theta: &[f64], spec: EnumSpec) -> Result<f64> {
    Ok(ExactModel::new(model, spec)?.log_normalizer(theta))
}

pub fn exact_mle(g_obs: &CountGraph, model: &ModelSpec, spec: EnumSpec) -> Result<ExactMle> {
    model.check_graph(g_obs)?;
    ExactModel::new(model, spec)?.mle(&model.suff_stats(g_obs))
}

/// `P(Y_ij = l | rest)` for `l = 0..=cap`, from full potentials of each fiber graph.
pub fn exact_conditional(
    g: &CountGraph,
    model: &ModelSpec,
    theta: &[f64],
    i: usize,
    j: usize,
    spec: EnumSpec,
) -> Result<Vec<f64>> {
    spec.check()?;
    if i == j {
        return Err(Error::Domain("self-loop dyad".into()));
    }
    let lp: Vec<f64> = (0..=spec.cap).map(|l| model.log_potential(&g.with_edge(i, j, l), theta)).collect();
    let z = logsumexp(&lp);
    Ok(lp.iter().map(|l| (l - z).exp()).collect())
}
