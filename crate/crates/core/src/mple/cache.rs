//! Pre-computed windows, reference ratios and change scores for the sampled dyads.

use nalgebra::{DMatrix, DVector};

use super::edges::EdgeSample;
use super::window::{build_window, WindowSpec};
use crate::error::{Error, Result};
use crate::graph::CountGraph;
use crate::linalg::logsumexp;
use crate::model::{log_reference_ratio, Margins, ModelSpec};
use crate::parallel::Executor;

/// Dyads per work unit. Fixed so that reductions are reproducible.
pub const BATCH: usize = 256;

pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

/// Flat storage: entry `e` of dyad `d` lives at `offsets[d] + e`, its change
/// score at `deltas[(offsets[d] + e) * k ..][..k]`.
#[derive(Clone, Debug)]
pub struct PseudolikCache {
    k: usize,
    dyads: Vec<(usize, usize)>,
    observed: Vec<u32>,
    weights: Vec<f64>,
    offsets: Vec<usize>,
    values: Vec<u32>,
    /// `ln(window weight) + ln h-ratio` per entry.
    log_base: Vec<f64>,
    deltas: Vec<f64>,
}

/// Log pseudo-likelihood with its analytic gradient and Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudolikEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

fn entry_bytes(k: usize) -> usize {
    k * 8 + 8 + 4
}

impl PseudolikCache {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_dyads(&self) -> usize {
        self.dyads.len()
    }

    pub fn n_entries(&self) -> usize {
        self.values.len()
    }

    pub fn dyads(&self) -> &[(usize, usize)] {
        &self.dyads
    }

    pub fn observed(&self) -> &[u32] {
        &self.observed
    }

    /// Horvitz-Thompson weights carried over from the edge sample.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bytes(&self) -> usize {
        self.values.len() * entry_bytes(self.k) + self.dyads.len() * 40
    }

    /// Window values of dyad `d`.
    pub fn window(&self, d: usize) -> &[u32] {
        &self.values[self.offsets[d]..self.offsets[d + 1]]
    }

    /// Log reference ratio plus log window weight of every entry of dyad `d`.
    pub fn log_base(&self, d: usize) -> &[f64] {
        &self.log_base[self.offsets[d]..self.offsets[d + 1]]
    }

    /// Change score of entry `e` of dyad `d`.
    pub fn delta(&self, d: usize, e: usize) -> &[f64] {
        let at = (self.offsets[d] + e) * self.k;
        &self.deltas[at..at + self.k]
    }

    fn n_batches(&self) -> usize {
        self.dyads.len().div_ceil(BATCH)
    }
}

pub fn build_cache(
    g: &CountGraph,
    model: &ModelSpec,
    sample: &EdgeSample,
    window: &WindowSpec,
    memory_budget: usize,
    exec: &Executor,
) -> Result<PseudolikCache> {
    model.check_graph(g)?;
    window.validate()?;
    if sample.is_empty() {
        return Err(Error::Domain("no dyads to cache".into()));
    }
    let k = model.k();
    let y_max = g.max_value();
    let windows: Vec<_> = sample
        .dyads
        .iter()
        .map(|&(i, j)| build_window(g.get(i, j), model.support(), window, y_max))
        .collect();
    let entries: usize = windows.iter().map(|w| w.len()).sum();
    let required = entries.saturating_mul(entry_bytes(k)).saturating_add(sample.len() * 40);
    if required > memory_budget {
        return Err(Error::Budget { required, budget: memory_budget });
    }
    let margins = model.needs_margins().then(|| Margins::of(g));
    let n_batches = sample.len().div_ceil(BATCH);
    let reference = model.reference();
    let chunks = exec.map(n_batches, |b| {
        let range = b * BATCH..((b + 1) * BATCH).min(sample.len());
        let mut deltas = Vec::new();
        let mut log_base = Vec::new();
        let mut scratch = vec![0.0; k];
        for d in range {
            let (i, j) = sample.dyads[d];
            let y = g.get(i, j);
            let w = &windows[d];
            for (&l, &lw) in w.values.iter().zip(&w.log_weights) {
                model.change_score_into(g, margins.as_ref(), i, j, l, &mut scratch);
                deltas.extend_from_slice(&scratch);
                log_base.push(lw + log_reference_ratio(y, l, reference));
            }
        }
        (deltas, log_base)
    });
    let mut offsets = Vec::with_capacity(sample.len() + 1);
    offsets.push(0);
    let mut values = Vec::with_capacity(entries);
    for w in &windows {
        values.extend_from_slice(&w.values);
        offsets.push(values.len());
    }
    let mut deltas = Vec::with_capacity(entries * k);
    let mut log_base = Vec::with_capacity(entries);
    for (dl, lb) in chunks {
        deltas.extend(dl);
        log_base.extend(lb);
    }
    Ok(PseudolikCache {
        k,
        dyads: sample.dyads.clone(),
        observed: sample.dyads.iter().map(|&(i, j)| g.get(i, j)).collect(),
        weights: sample.weights.clone(),
        offsets,
        values,
        log_base,
        deltas,
    })
}

struct Partial {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn eval_batch(cache: &PseudolikCache, theta: &[f64], weights: &[f64], b: usize) -> Partial {
    let k = cache.k;
    let mut out = Partial { value: 0.0, grad: vec![0.0; k], hess: vec![0.0; k * k] };
    let mut s = Vec::new();
    let mut mu = vec![0.0; k];
    let range = b * BATCH..((b + 1) * BATCH).min(cache.dyads.len());
    for d in range {
        let w = weights[d];
        let (lo, hi) = (cache.offsets[d], cache.offsets[d + 1]);
        s.clear();
        for e in lo..hi {
            let delta = &cache.deltas[e * k..(e + 1) * k];
            s.push(cache.log_base[e] + theta.iter().zip(delta).map(|(t, x)| t * x).sum::<f64>());
        }
        let lse = logsumexp(&s);
        // The observed value contributes exp(0) with a zero change score.
        out.value -= w * lse;
        mu.iter_mut().for_each(|m| *m = 0.0);
        for (e, &se) in (lo..hi).zip(&s) {
            let p = (se - lse).exp();
            let delta = &cache.deltas[e * k..(e + 1) * k];
            for t in 0..k {
                mu[t] += p * delta[t];
            }
        }
        for t in 0..k {
            out.grad[t] -= w * mu[t];
        }
        for (e, &se) in (lo..hi).zip(&s) {
            let p = (se - lse).exp();
            if p == 0.0 {
                continue;
            }
            let delta = &cache.deltas[e * k..(e + 1) * k];
            for a in 0..k {
                let da = delta[a] - mu[a];
                for c in 0..=a {
                    out.hess[a * k + c] -= w * p * da * (delta[c] - mu[c]);
                }
            }
        }
    }
    out
}

/// Weighted log pseudo-likelihood `Σ w_ij ln P(Y_ij = y_ij | rest, θ)`.
pub fn log_pseudolik(cache: &PseudolikCache, theta: &[f64], weights: &[f64], exec: &Executor) -> Result<PseudolikEval> {
    let k = cache.k;
    if theta.len() != k {
        return Err(Error::Domain(format!("θ has {} entries, model has {k} terms", theta.len())));
    }
    if let Some(t) = theta.iter().find(|t| !t.is_finite()) {
        return Err(Error::Domain(format!("non-finite coefficient {t}")));
    }
    if weights.len() != cache.dyads.len() {
        return Err(Error::Domain(format!("{} weights for {} dyads", weights.len(), cache.dyads.len())));
    }
    let parts = exec.map(cache.n_batches(), |b| eval_batch(cache, theta, weights, b));
    let mut value = 0.0;
    let mut grad = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    for p in parts {
        value += p.value;
        for a in 0..k {
            grad[a] += p.grad[a];
            for c in 0..=a {
                hess[(a, c)] += p.hess[a * k + c];
            }
        }
    }
    for a in 0..k {
        for c in 0..a {
            hess[(c, a)] = hess[(a, c)];
        }
    }
    Ok(PseudolikEval { value, gradient: grad, hessian: hess })
}
