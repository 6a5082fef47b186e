//! Metropolis-Hastings sampling over count-valued graphs.
//!
//! Each step picks a dyad according to a [`ProposalKind`], then proposes a
//! new value with a symmetric geometric random walk reflected at zero:
//! `l = y ± s`, `s = 1 + Geometric(0.25)`, negative values mapped to `|l|`.
//! The walk is symmetric away from zero; the reflection adds a second path
//! to every positive target, which the acceptance ratio corrects for.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CountGraph;
use crate::model::{dot, log_reference_ratio, Margins, ModelSpec};
use crate::rng::rng_from_seed;

/// Success probability of the geometric jump length.
pub const JUMP_P: f64 = 0.25;

/// Accepted moves between full recomputations of the running statistics.
const RECOMPUTE_EVERY: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalKind {
    /// Every dyad equally likely.
    #[default]
    RandomDyad,
    /// With probability `p_nonzero` pick among nonzero dyads, otherwise among zero dyads.
    TieWeightedDyad { p_nonzero: f64 },
}

impl ProposalKind {
    pub const DEFAULT_TIE_WEIGHT: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProposalKind::TieWeightedDyad { p_nonzero } if !(p_nonzero > 0.0 && p_nonzero < 1.0) => {
                Err(Error::Domain(format!("p_nonzero must lie in (0, 1), got {p_nonzero}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default)]
    pub proposal: ProposalKind,
    pub burnin: u64,
    pub interval: u64,
    pub n_samples: usize,
    pub seed: u64,
}

impl SamplerConfig {
    /// Burn-in defaults to 16 intervals.
    pub fn new(interval: u64, n_samples: usize, seed: u64) -> Self {
        Self { proposal: ProposalKind::RandomDyad, burnin: 16 * interval, interval, n_samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 || self.n_samples == 0 {
            return Err(Error::Domain("sampler interval and n_samples must be positive".into()));
        }
        self.proposal.validate()
    }
}

/// Swap-remove index set over dyad ids.
#[derive(Clone, Debug)]
struct DyadSet {
    members: Vec<u32>,
    pos: Vec<u32>,
}

impl DyadSet {
    const ABSENT: u32 = u32::MAX;

    fn new(n_dyads: usize) -> Self {
        Self { members: Vec::new(), pos: vec![Self::ABSENT; n_dyads] }
    }

    fn insert(&mut self, d: usize) {
        debug_assert_eq!(self.pos[d], Self::ABSENT);
        self.pos[d] = self.members.len() as u32;
        self.members.push(d as u32);
    }

    fn remove(&mut self, d: usize) {
        let p = self.pos[d] as usize;
        let last = *self.members.last().unwrap();
        self.members.swap_remove(p);
        if last as usize != d {
            self.pos[last as usize] = p as u32;
        }
        self.pos[d] = Self::ABSENT;
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        self.members[rng.random_range(0..self.members.len())] as usize
    }
}

/// A Markov chain position with incrementally maintained statistics.
#[derive(Clone, Debug)]
pub struct ChainState<'m> {
    model: &'m ModelSpec,
    graph: CountGraph,
    stats: Vec<f64>,
    margins: Option<Margins>,
    nonzero: DyadSet,
    zero: DyadSet,
    delta: Vec<f64>,
    since_recompute: u64,
    geometric: Geometric,
}

impl<'m> ChainState<'m> {
    pub fn new(model: &'m ModelSpec, graph: CountGraph) -> Result<Self> {
        model.check_graph(&graph)?;
        let n_dyads = graph.n_dyads();
        let mut nonzero = DyadSet::new(n_dyads);
        let mut zero = DyadSet::new(n_dyads);
        for (k, (i, j)) in graph.dyads().enumerate() {
            if graph.get(i, j) > 0 {
                nonzero.insert(k);
            } else {
                zero.insert(k);
            }
        }
        Ok(Self {
            model,
            stats: model.suff_stats(&graph),
            margins: model.needs_margins().then(|| Margins::of(&graph)),
            graph,
            nonzero,
            zero,
            delta: vec![0.0; model.k()],
            since_recompute: 0,
            geometric: Geometric::new(JUMP_P).expect("valid geometric parameter"),
        })
    }

    pub fn graph(&self) -> &CountGraph {
        &self.graph
    }

    pub fn into_graph(self) -> CountGraph {
        self.graph
    }

    /// Running sufficient statistics of the current state.
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    fn selection_prob(&self, proposal: ProposalKind, value: u32, n_nonzero: usize) -> f64 {
        let n_dyads = self.graph.n_dyads();
        match proposal {
            ProposalKind::RandomDyad => 1.0 / n_dyads as f64,
            ProposalKind::TieWeightedDyad { p_nonzero } => {
                let n_zero = n_dyads - n_nonzero;
                if value > 0 {
                    let w = if n_zero > 0 { p_nonzero } else { 1.0 };
                    w / n_nonzero as f64
                } else {
                    let w = if n_nonzero > 0 { 1.0 - p_nonzero } else { 1.0 };
                    w / n_zero as f64
                }
            }
        }
    }

    fn select_dyad<R: Rng>(&self, proposal: ProposalKind, rng: &mut R) -> usize {
        match proposal {
            ProposalKind::RandomDyad => rng.random_range(0..self.graph.n_dyads()),
            ProposalKind::TieWeightedDyad { p_nonzero } => {
                let use_nonzero = match (self.nonzero.len(), self.zero.len()) {
                    (0, _) => false,
                    (_, 0) => true,
                    _ => rng.random::<f64>() < p_nonzero,
                };
                if use_nonzero {
                    self.nonzero.pick(rng)
                } else {
                    self.zero.pick(rng)
                }
            }
        }
    }

    /// One Metropolis-Hastings proposal. Returns whether it was accepted.
    pub fn step<R: Rng>(&mut self, theta: &[f64], proposal: ProposalKind, rng: &mut R) -> bool {
        let d = self.select_dyad(proposal, rng);
        let (i, j) = self.graph.dyad_at(d);
        let y = self.graph.get(i, j);

        let jump = 1 + self.geometric.sample(rng);
        let up = rng.random::<bool>();
        let l = if up {
            y as u64 + jump
        } else if jump <= y as u64 {
            y as u64 - jump
        } else {
            jump - y as u64
        };
        if l == y as u64 {
            return true;
        }
        if self.model.support().cap.is_some_and(|c| l > c as u64) || l > u32::MAX as u64 {
            return false;
        }
        let l = l as u32;

        // Reverse/forward value-proposal ratio. Both directions share the direct
        // path of length |l - y|; the reflected path of length l + y exists
        // only towards a positive target.
        let r = (1.0 - JUMP_P).powi(2 * y.min(l) as i32);
        let mut log_q = ((1.0 + if y > 0 { r } else { 0.0 }) / (1.0 + if l > 0 { r } else { 0.0 })).ln();
        if let ProposalKind::TieWeightedDyad { .. } = proposal {
            let nz = self.nonzero.len();
            let nz_after = nz + (l > 0) as usize - (y > 0) as usize;
            log_q += (self.selection_prob(proposal, l, nz_after) / self.selection_prob(proposal, y, nz)).ln();
        }

        self.model.change_score_into(&self.graph, self.margins.as_ref(), i, j, l, &mut self.delta);
        let log_alpha = dot(theta, &self.delta) + log_reference_ratio(y, l, self.model.reference()) + log_q;
        if log_alpha < 0.0 && rng.random::<f64>().ln() >= log_alpha {
            return false;
        }

        self.graph.set(i, j, l);
        if let Some(m) = self.margins.as_mut() {
            m.update(i, j, y, l);
        }
        match (y > 0, l > 0) {
            (true, false) => {
                self.nonzero.remove(d);
                self.zero.insert(d);
            }
            (false, true) => {
                self.zero.remove(d);
                self.nonzero.insert(d);
            }
            _ => {}
        }
        for (s, dl) in self.stats.iter_mut().zip(&self.delta) {
            *s += dl;
        }
        self.since_recompute += 1;
        if self.since_recompute >= RECOMPUTE_EVERY {
            self.stats = self.model.suff_stats(&self.graph);
            self.since_recompute = 0;
        }
        true
    }

    pub fn run<R: Rng>(&mut self, theta: &[f64], proposal: ProposalKind, steps: u64, rng: &mut R) -> u64 {
        (0..steps).map(|_| self.step(theta, proposal, rng) as u64).sum()
    }
}

/// Single Metropolis-Hastings step on `state`; see [`ChainState::step`].
pub fn mh_step<R: Rng>(state: &mut ChainState<'_>, theta: &[f64], proposal: ProposalKind, rng: &mut R) -> bool {
    state.step(theta, proposal, rng)
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub samples: Vec<CountGraph>,
    /// Row `s` holds the sufficient statistics of sample `s`.
    pub stat_traces: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

fn check_theta(model: &ModelSpec, theta: &[f64]) -> Result<()> {
    if theta.len() != model.k() {
        return Err(Error::Domain(format!("expected {} coefficients, got {}", model.k(), theta.len())));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("coefficients must be finite".into()));
    }
    Ok(())
}

/// Runs burn-in, then retains every `interval`-th state.
pub fn simulate(model: &ModelSpec, theta: &[f64], start: &CountGraph, cfg: &SamplerConfig) -> Result<Simulation> {
    let mut rng = rng_from_seed(cfg.seed);
    let (traces, samples, rate, _) = run_chain(model, theta, start.clone(), cfg, &mut rng, true)?;
    Ok(Simulation { samples, stat_traces: traces, acceptance_rate: rate })
}

/// Like [`simulate`] but keeps only statistics; also returns the final state.
pub fn simulate_stats<R: Rng>(
    model: &ModelSpec,
    theta: &[f64],
    start: CountGraph,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, CountGraph)> {
    let (traces, _, _, last) = run_chain(model, theta, start, cfg, rng, false)?;
    Ok((traces, last))
}

type ChainOutput = (Vec<Vec<f64>>, Vec<CountGraph>, f64, CountGraph);

fn run_chain<R: Rng>(
    model: &ModelSpec,
    theta: &[f64],
    start: CountGraph,
    cfg: &SamplerConfig,
    rng: &mut R,
    keep_graphs: bool,
) -> Result<ChainOutput> {
    cfg.validate()?;
    check_theta(model, theta)?;
    let mut state = ChainState::new(model, start)?;
    let mut accepted = state.run(theta, cfg.proposal, cfg.burnin, rng);
    let mut traces = Vec::with_capacity(cfg.n_samples);
    let mut samples = Vec::new();
    for _ in 0..cfg.n_samples {
        accepted += state.run(theta, cfg.proposal, cfg.interval, rng);
        traces.push(state.stats().to_vec());
        if keep_graphs {
            samples.push(state.graph().clone());
        }
    }
    let total = cfg.burnin + cfg.interval * cfg.n_samples as u64;
    Ok((traces, samples, accepted as f64 / total.max(1) as f64, state.into_graph()))
}

/// Per-statistic chain diagnostics. `None` marks a constant trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostic {
    pub lag1_autocorrelation: Option<f64>,
    pub effective_sample_size: Option<f64>,
}

fn autocorrelations(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    let scale: f64 = x.iter().map(|v| v * v).sum();
    if c0 <= 1e-24 * scale || c0 == 0.0 {
        return None;
    }
    Some((0..=max_lag.min(n - 1)).map(|k| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0).collect())
}

/// Lag-1 autocorrelation and ESS (initial positive sequence) for one trace.
pub fn trace_diagnostic(x: &[f64]) -> TraceDiagnostic {
    let n = x.len();
    let Some(rho) = autocorrelations(x, n / 2) else {
        return TraceDiagnostic { lag1_autocorrelation: None, effective_sample_size: None };
    };
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < rho.len() {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let tau = tau.max(1.0 / n as f64);
    TraceDiagnostic {
        lag1_autocorrelation: rho.get(1).copied(),
        effective_sample_size: Some((n as f64 / tau).min(n as f64)),
    }
}

/// Diagnostics for each column of an `n_samples x k` trace matrix.
pub fn mcmc_diagnostics(stat_traces: &[Vec<f64>]) -> Result<Vec<TraceDiagnostic>> {
    if stat_traces.len() < 10 {
        return Err(Error::Domain(format!("diagnostics need at least 10 samples, got {}", stat_traces.len())));
    }
    let k = stat_traces[0].len();
    Ok((0..k)
        .map(|t| {
            let col: Vec<f64> = stat_traces.iter().map(|r| r[t]).collect();
            trace_diagnostic(&col)
        })
        .collect())
}
