//! Shared fixtures for the benchmarks.

use vergm::sampler::simulate;
use vergm::study::{CovariateBlock, ModelBlock};
use vergm::{CountGraph, ModelSpec, ReferenceMeasure, SamplerConfig, TermSpec};

/// A Poisson model with covariate and dependence terms on `n` nodes.
pub fn model(n: usize, seed: u64) -> ModelSpec {
    let block = ModelBlock {
        terms: ["sum", "nonzero", "nodeocov(x)", "edgecov(d)", "mutual"]
            .iter()
            .map(|t| t.parse::<TermSpec>().unwrap())
            .collect(),
        reference: ReferenceMeasure::Poisson,
        cap: None,
        covariates: CovariateBlock { generate_node: vec!["x".into()], generate_dyad: vec!["d".into()], ..Default::default() },
    };
    block.build(n, seed).unwrap()
}

pub const THETA: [f64; 5] = [0.2, -0.8, 0.1, -0.2, 0.15];

/// A draw from [`model`] at [`THETA`].
pub fn network(model: &ModelSpec, seed: u64) -> CountGraph {
    let n = model.covariates().n();
    let cfg = SamplerConfig::new(20 * n as u64 * n as u64, 1, seed);
    simulate(model, &THETA, &CountGraph::empty(n).unwrap(), &cfg).unwrap().samples.pop().unwrap()
}
