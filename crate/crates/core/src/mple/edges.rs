//! Edge-variable subsampling with Horvitz-Thompson weights.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CountGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Simple random sample over all ordered dyads.
    #[default]
    Uniform,
    /// Half from nonzero dyads, half from zero dyads.
    TieNoTie,
    /// Equal allocation across the distinct observed edge values.
    FlatValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSampleSpec {
    #[serde(default)]
    pub strategy: SamplingStrategy,
    /// Number of dyads to sample; `None` uses every dyad.
    #[serde(default)]
    pub m_edges: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl EdgeSampleSpec {
    pub fn all() -> Self {
        Self { strategy: SamplingStrategy::Uniform, m_edges: None, seed: 0 }
    }

    pub fn new(strategy: SamplingStrategy, m_edges: usize, seed: u64) -> Self {
        Self { strategy, m_edges: Some(m_edges), seed }
    }
}

/// Sampled dyads (sorted by dyad index) with their inclusion weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSample {
    pub dyads: Vec<(usize, usize)>,
    /// Stratum size over drawn count; all 1 for an exhaustive sample.
    pub weights: Vec<f64>,
}

impl EdgeSample {
    /// Every dyad with weight 1.
    pub fn exhaustive(g: &CountGraph) -> Self {
        Self { dyads: g.dyads().collect(), weights: vec![1.0; g.n_dyads()] }
    }

    pub fn len(&self) -> usize {
        self.dyads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dyads.is_empty()
    }
}

/// Splits `m` draws as evenly as possible over strata of the given sizes.
/// Leftover draws go to the earliest strata with spare capacity.
fn allocate(sizes: &[usize], m: usize) -> Vec<usize> {
    let mut alloc = vec![0usize; sizes.len()];
    let mut remaining = m;
    loop {
        let open: Vec<usize> = (0..sizes.len()).filter(|&s| alloc[s] < sizes[s]).collect();
        if remaining == 0 || open.is_empty() {
            return alloc;
        }
        let share = remaining / open.len();
        if share == 0 {
            for &s in open.iter().take(remaining) {
                alloc[s] += 1;
            }
            return alloc;
        }
        for &s in &open {
            let give = share.min(sizes[s] - alloc[s]);
            alloc[s] += give;
            remaining -= give;
        }
    }
}

pub fn sample_edges<R: Rng>(g: &CountGraph, spec: &EdgeSampleSpec, rng: &mut R) -> Result<EdgeSample> {
    let total = g.n_dyads();
    let m = spec.m_edges.unwrap_or(total);
    if m == 0 || m > total {
        return Err(Error::Domain(format!("m_edges = {m} must lie in 1..={total}")));
    }
    if m == total {
        return Ok(EdgeSample::exhaustive(g));
    }
    let strata: Vec<Vec<usize>> = match spec.strategy {
        SamplingStrategy::Uniform => vec![(0..total).collect()],
        SamplingStrategy::TieNoTie => {
            let (nz, z): (Vec<usize>, Vec<usize>) = (0..total).partition(|&k| {
                let (i, j) = g.dyad_at(k);
                g.get(i, j) > 0
            });
            vec![nz, z]
        }
        SamplingStrategy::FlatValue => {
            let mut by_value: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for k in 0..total {
                let (i, j) = g.dyad_at(k);
                by_value.entry(g.get(i, j)).or_default().push(k);
            }
            by_value.into_values().collect()
        }
    };
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, m);
    let mut picked: Vec<(usize, f64)> = Vec::with_capacity(m);
    for (stratum, &take) in strata.iter().zip(&alloc) {
        if take == 0 {
            continue;
        }
        let w = stratum.len() as f64 / take as f64;
        for pos in index::sample(rng, stratum.len(), take) {
            picked.push((stratum[pos], w));
        }
    }
    picked.sort_unstable_by_key(|p| p.0);
    Ok(EdgeSample {
        dyads: picked.iter().map(|&(k, _)| g.dyad_at(k)).collect(),
        weights: picked.iter().map(|&(_, w)| w).collect(),
    })
}
