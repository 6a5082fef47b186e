//! Contrastive divergence: short chains restarted at the observed graph.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Diagnostics, Estimate};
use crate::graph::CountGraph;
use crate::importance::{center, maximize};
use crate::linalg::{inverse_sqrt_diag, weighted_moments};
use crate::model::ModelSpec;
use crate::mple::initial_theta;
use crate::parallel::Executor;
use crate::rng::{derive_seed, stream};
use crate::sampler::{ChainState, ProposalKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdConfig {
    pub steps: u64,
    pub multiplicity: u64,
    pub n_chains: usize,
    pub max_rounds: usize,
    /// Stop once a round moves θ by less than this (Euclidean norm).
    pub tolerance: f64,
    /// Largest allowed θ change per round.
    pub trust_radius: f64,
    pub proposal: ProposalKind,
    pub seed: u64,
    pub workers: usize,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            steps: 8,
            multiplicity: 1,
            n_chains: 256,
            max_rounds: 100,
            tolerance: 1e-4,
            trust_radius: 0.5,
            proposal: ProposalKind::RandomDyad,
            seed: 0,
            workers: 1,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.multiplicity == 0 {
            return Err(Error::Domain("CD steps and multiplicity must be at least 1".into()));
        }
        if self.n_chains < 2 {
            return Err(Error::Domain(format!("CD needs at least 2 chains, got {}", self.n_chains)));
        }
        if self.max_rounds == 0 {
            return Err(Error::Domain("CD max_rounds must be at least 1".into()));
        }
        if !(self.trust_radius > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::Domain("CD trust radius must be positive and tolerance non-negative".into()));
        }
        self.proposal.validate()
    }
}

/// Chain-end statistics, one row per chain. Every chain starts at `g_obs`.
///
/// `round` selects an independent family of per-chain streams.
pub fn cd_sample(
    g_obs: &CountGraph,
    model: &ModelSpec,
    theta: &[f64],
    cfg: &CdConfig,
    round: u64,
    exec: &Executor,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if theta.len() != model.k() || theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("CD coefficients must be finite and match the model".into()));
    }
    let anchor = ChainState::new(model, g_obs.clone())?;
    let round_seed = derive_seed(cfg.seed, round);
    let proposals = cfg.steps * cfg.multiplicity;
    Ok(exec.map(cfg.n_chains, |c| {
        let mut state = anchor.clone();
        debug_assert_eq!(state.graph(), g_obs);
        let mut rng = stream(round_seed, c as u64);
        state.run(theta, cfg.proposal, proposals, &mut rng);
        state.stats().to_vec()
    }))
}

pub fn fit_cd(g_obs: &CountGraph, model: &ModelSpec, cfg: &CdConfig) -> Result<Estimate> {
    let exec = Executor::new(cfg.workers)?;
    fit_cd_from(g_obs, model, &initial_theta(g_obs, model), cfg, &exec)
}

pub fn fit_cd_from(
    g_obs: &CountGraph,
    model: &ModelSpec,
    theta0: &[f64],
    cfg: &CdConfig,
    exec: &Executor,
) -> Result<Estimate> {
    let start = Instant::now();
    cfg.validate()?;
    model.check_graph(g_obs)?;
    let obs = model.suff_stats(g_obs);
    let mut theta = theta0.to_vec();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(cfg.max_rounds);
    let mut steps = Vec::with_capacity(cfg.max_rounds);
    let mut converged = false;
    let mut rounds = 0;
    let mut warnings = Vec::new();
    while rounds < cfg.max_rounds {
        let sample = cd_sample(g_obs, model, &theta, cfg, rounds as u64, exec)?;
        rounds += 1;
        let delta = maximize(&center(&sample, &obs), Some(cfg.trust_radius));
        let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t += d;
        }
        history.push(theta.clone());
        steps.push(norm);
        if norm < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        // Stochastic updates rarely settle below the tolerance; average the second half.
        let tail = &history[history.len() / 2..];
        theta = (0..model.k()).map(|t| tail.iter().map(|h| h[t]).sum::<f64>() / tail.len() as f64).collect();
        converged = true;
        warnings.push(format!(
            "CD reached {} rounds; reporting the average of the last {} iterates",
            cfg.max_rounds,
            tail.len()
        ));
    }
    let final_sample = cd_sample(g_obs, model, &theta, cfg, rounds as u64, exec)?;
    let (_, cov): (_, DMatrix<f64>) = weighted_moments(&final_sample, &vec![0.0; final_sample.len()]);
    let se = match inverse_sqrt_diag(&cov) {
        Some(se) => se,
        None => {
            warnings.push("degenerate covariance of chain-end statistics; standard errors undefined".into());
            vec![f64::NAN; model.k()]
        }
    };
    Ok(Estimate {
        method: "cd".into(),
        terms: model.term_names(),
        theta,
        se,
        converged,
        iterations: rounds,
        wallclock_seconds: start.elapsed().as_secs_f64(),
        diagnostics: Diagnostics { warnings, step_lengths: steps, ..Default::default() },
    })
}
