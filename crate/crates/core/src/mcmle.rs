//! Monte Carlo maximum likelihood with step-length damping.
//!
//! Each iteration simulates at the current `θ_r`, moves the target from the
//! simulated mean towards the observed statistics only as far as the sample's
//! convex hull allows (Hummel et al. 2012), and maximizes the importance-sampled
//! likelihood ratio towards that target.

use std::time::Instant;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::cd::{fit_cd, CdConfig};
use crate::error::{Error, Result};
use crate::estimate::{Diagnostics, Estimate};
use crate::graph::CountGraph;
use crate::importance::{center, effective_sample_size, evaluate, maximize};
use crate::linalg::{inverse_sqrt_diag, solve_spd, weighted_moments};
use crate::model::ModelSpec;
use crate::mple::{fit_mple, MpleOptions};
use crate::parallel::Executor;
use crate::rng::{derive_seed, stream};
use crate::sampler::{trace_diagnostic, ChainState, ProposalKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLength {
    #[default]
    Damped,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmleConfig {
    pub interval: u64,
    /// Defaults to 16 intervals.
    pub burnin: Option<u64>,
    pub n_samples: usize,
    pub max_iterations: usize,
    pub proposal: ProposalKind,
    pub step_length: StepLength,
    /// Relative margin kept between the damped target and the hull boundary.
    pub hull_margin: f64,
    pub t_ratio_tol: f64,
    /// Significance level of the joint convergence check.
    pub alpha: f64,
    pub min_ess_fraction: f64,
    /// Independent chains sharing the sample budget.
    pub chains: usize,
    pub workers: usize,
    pub seed: u64,
    /// Rerun once with a fresh seed after non-convergence.
    pub retry: bool,
}

impl Default for McmleConfig {
    fn default() -> Self {
        Self {
            interval: 1024,
            burnin: None,
            n_samples: 1024,
            max_iterations: 500,
            proposal: ProposalKind::RandomDyad,
            step_length: StepLength::Damped,
            hull_margin: 0.05,
            t_ratio_tol: 0.1,
            alpha: 0.05,
            min_ess_fraction: 0.05,
            chains: 1,
            workers: 1,
            seed: 0,
            retry: true,
        }
    }
}

impl McmleConfig {
    pub fn burnin(&self) -> u64 {
        self.burnin.unwrap_or(16 * self.interval)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 || self.n_samples == 0 || self.max_iterations == 0 || self.chains == 0 {
            return Err(Error::Domain("MCMLE interval, n_samples, max_iterations and chains must be positive".into()));
        }
        if self.n_samples < self.chains {
            return Err(Error::Domain("MCMLE needs at least one sample per chain".into()));
        }
        if !(self.hull_margin >= 0.0 && self.t_ratio_tol > 0.0 && self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain("invalid MCMLE convergence settings".into()));
        }
        if !(0.0..1.0).contains(&self.min_ess_fraction) {
            return Err(Error::Domain("min_ess_fraction must lie in [0, 1)".into()));
        }
        self.proposal.validate()
    }
}

/// Largest `t ≤ 2` with `mean + t (obs - mean)` inside the convex hull of `rows`.
///
/// Coordinates are standardized first; constant coordinates are left unscaled.
pub fn hull_ray_extent(rows: &[Vec<f64>], obs: &[f64]) -> f64 {
    let k = obs.len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..k).map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..k)
        .map(|t| {
            let v = rows.iter().map(|r| (r[t] - mean[t]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let dir: Vec<f64> = (0..k).map(|t| (obs[t] - mean[t]) / sd[t]).collect();
    if dir.iter().all(|d| d.abs() < 1e-12) {
        return 2.0;
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (0.0, 2.0));
    let lambdas: Vec<_> = rows.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(lambdas.iter().map(|&l| (l, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    for c in 0..k {
        let mut expr: Vec<_> = rows.iter().zip(&lambdas).map(|(r, &l)| (l, (r[c] - mean[c]) / sd[c])).collect();
        expr.push((t, -dir[c]));
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, 0.0);
    }
    match lp.solve() {
        Ok(sol) => *sol.var_value(t),
        Err(_) => 0.0,
    }
}

/// Step length for a ray extent: 1 strictly inside the hull, otherwise the
/// extent shrunk by the margin.
pub fn step_length(extent: f64, margin: f64) -> f64 {
    if extent > 1.0 {
        1.0
    } else {
        (extent / (1.0 + margin)).max(1e-4)
    }
}

/// p-value of a Hotelling T² test that the simulated mean equals `obs`.
pub fn hotelling_p_value(mean: &[f64], cov: &DMatrix<f64>, obs: &[f64], n_eff: f64) -> f64 {
    let k = obs.len() as f64;
    if n_eff <= k + 1.0 {
        return 0.0;
    }
    let diff = DVector::from_iterator(obs.len(), mean.iter().zip(obs).map(|(m, o)| m - o));
    if diff.iter().all(|d| *d == 0.0) {
        return 1.0;
    }
    let Some(x) = solve_spd(cov, &diff) else { return 0.0 };
    let t2 = n_eff * diff.dot(&x);
    let f = t2 * (n_eff - k) / (k * (n_eff - 1.0));
    match FisherSnedecor::new(k, n_eff - k) {
        Ok(dist) => 1.0 - dist.cdf(f),
        Err(_) => 0.0,
    }
}

struct Draws {
    rows: Vec<Vec<f64>>,
    /// Smallest per-statistic effective sample size, summed over chains.
    n_eff: f64,
}

fn simulate_round(
    states: &mut [CountGraph],
    model: &ModelSpec,
    theta: &[f64],
    cfg: &McmleConfig,
    round_seed: u64,
    exec: &Executor,
) -> Result<Draws> {
    let chains = states.len();
    let per = cfg.n_samples / chains;
    let extra = cfg.n_samples % chains;
    let starts: Vec<ChainState<'_>> =
        states.iter().map(|g| ChainState::new(model, g.clone())).collect::<Result<_>>()?;
    let out = exec.map(chains, |c| {
        let mut state = starts[c].clone();
        let mut rng = stream(round_seed, c as u64);
        state.run(theta, cfg.proposal, cfg.burnin(), &mut rng);
        let m = per + (c < extra) as usize;
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            state.run(theta, cfg.proposal, cfg.interval, &mut rng);
            rows.push(state.stats().to_vec());
        }
        (rows, state.graph().clone())
    });
    let mut rows = Vec::with_capacity(cfg.n_samples);
    let mut n_eff = 0.0;
    for (c, (chain_rows, last)) in out.into_iter().enumerate() {
        let ess = (0..model.k())
            .filter_map(|t| {
                let trace: Vec<f64> = chain_rows.iter().map(|r| r[t]).collect();
                trace_diagnostic(&trace).effective_sample_size
            })
            .fold(chain_rows.len() as f64, f64::min);
        n_eff += ess;
        rows.extend(chain_rows);
        states[c] = last;
    }
    Ok(Draws { rows, n_eff })
}

struct Attempt {
    theta: Vec<f64>,
    se: Vec<f64>,
    converged: bool,
    iterations: usize,
    gammas: Vec<f64>,
    t_ratios: Vec<f64>,
    degenerate: usize,
    warnings: Vec<String>,
}

fn attempt(
    g_obs: &CountGraph,
    model: &ModelSpec,
    theta_seed: &[f64],
    cfg: &McmleConfig,
    seed: u64,
    exec: &Executor,
) -> Result<Attempt> {
    let k = model.k();
    let obs = model.suff_stats(g_obs);
    let mut states = vec![g_obs.clone(); cfg.chains];
    let mut theta = theta_seed.to_vec();
    let mut gamma_cap = 1.0f64;
    let mut out = Attempt {
        theta: theta.clone(),
        se: vec![f64::NAN; k],
        converged: false,
        iterations: 0,
        gammas: Vec::new(),
        t_ratios: Vec::new(),
        degenerate: 0,
        warnings: Vec::new(),
    };
    let uniform = vec![0.0; cfg.n_samples];
    while out.iterations < cfg.max_iterations {
        let draws = simulate_round(&mut states, model, &theta, cfg, derive_seed(seed, out.iterations as u64), exec)?;
        out.iterations += 1;
        let (mean, cov) = weighted_moments(&draws.rows, &uniform);
        let max_t = (0..k)
            .map(|t| {
                let diff = obs[t] - mean[t];
                let sd = cov[(t, t)].max(0.0).sqrt();
                if sd > 0.0 {
                    (diff / sd).abs()
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        let gamma = match cfg.step_length {
            StepLength::Full => 1.0,
            StepLength::Damped => step_length(hull_ray_extent(&draws.rows, &obs), cfg.hull_margin),
        }
        .min(gamma_cap);
        out.gammas.push(gamma);
        out.t_ratios.push(max_t);
        out.se = inverse_sqrt_diag(&cov).unwrap_or_else(|| vec![f64::NAN; k]);
        out.theta = theta.clone();

        let mean_v: Vec<f64> = mean.iter().copied().collect();
        let done = gamma == 1.0
            && max_t < cfg.t_ratio_tol
            && hotelling_p_value(&mean_v, &cov, &obs, draws.n_eff) > cfg.alpha;
        let target: Vec<f64> = (0..k).map(|t| mean[t] + gamma * (obs[t] - mean[t])).collect();
        let d = center(&draws.rows, &target);
        let delta = maximize(&d, None);
        let at_new = evaluate(&d, &delta);
        let ess = effective_sample_size(&at_new.weights);
        if ess < cfg.min_ess_fraction * draws.rows.len() as f64 {
            if done {
                out.converged = true;
                break;
            }
            out.degenerate += 1;
            gamma_cap *= 0.5;
            continue;
        }
        gamma_cap = 1.0;
        for (t, dl) in theta.iter_mut().zip(&delta) {
            *t += dl;
        }
        if done {
            // Final full step; standard errors from the reweighted sample at the new point.
            let log_w: Vec<f64> = at_new.weights.iter().map(|w| w.ln()).collect();
            let (_, cov_new) = weighted_moments(&draws.rows, &log_w);
            out.theta = theta.clone();
            out.se = inverse_sqrt_diag(&cov_new).unwrap_or_else(|| vec![f64::NAN; k]);
            out.converged = true;
            break;
        }
        if theta.iter().any(|t| !t.is_finite()) {
            out.warnings.push("coefficients became non-finite".into());
            break;
        }
    }
    if out.se.iter().any(|s| !s.is_finite()) {
        out.warnings.push("simulated statistics have a singular covariance; standard errors undefined".into());
    }
    Ok(out)
}

pub fn fit_mcmle(g_obs: &CountGraph, model: &ModelSpec, theta_seed: &[f64], cfg: &McmleConfig) -> Result<Estimate> {
    let start = Instant::now();
    cfg.validate()?;
    model.check_graph(g_obs)?;
    if theta_seed.len() != model.k() || theta_seed.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("MCMLE seed coefficients must be finite and match the model".into()));
    }
    let exec = Executor::new(cfg.workers)?;
    let mut run = attempt(g_obs, model, theta_seed, cfg, cfg.seed, &exec)?;
    let mut reruns = 0;
    let mut iterations = run.iterations;
    let mut warnings = std::mem::take(&mut run.warnings);
    if !run.converged && cfg.retry {
        warnings.push(format!("no convergence in {} iterations; rerunning with a fresh seed", cfg.max_iterations));
        reruns = 1;
        let mut second = attempt(g_obs, model, theta_seed, cfg, derive_seed(cfg.seed, u64::MAX), &exec)?;
        iterations += second.iterations;
        warnings.append(&mut second.warnings);
        second.degenerate += run.degenerate;
        run = second;
    }
    if !run.converged {
        warnings.push("MCMLE did not converge".into());
    }
    Ok(Estimate {
        method: "mcmle".into(),
        terms: model.term_names(),
        theta: run.theta,
        se: run.se,
        converged: run.converged,
        iterations,
        wallclock_seconds: start.elapsed().as_secs_f64(),
        diagnostics: Diagnostics {
            warnings,
            step_lengths: run.gammas,
            max_t_ratios: run.t_ratios,
            reruns,
            degenerate_restarts: run.degenerate,
            ..Default::default()
        },
    })
}

/// Where MCMLE starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMethod {
    Cd,
    Mple,
    Zeros,
    Vector(Vec<f64>),
}

/// Runs the seed estimator, then MCMLE from its estimate.
pub fn fit_pipeline(
    g_obs: &CountGraph,
    model: &ModelSpec,
    seed: &SeedMethod,
    cd: &CdConfig,
    mple: &MpleOptions,
    mcmle: &McmleConfig,
) -> Result<Estimate> {
    let start = Instant::now();
    let (label, theta0, seed_est) = match seed {
        SeedMethod::Cd => {
            let e = fit_cd(g_obs, model, cd)?;
            ("cd-mcmle", e.theta.clone(), Some(e))
        }
        SeedMethod::Mple => {
            let e = fit_mple(g_obs, model, mple)?;
            ("mple-mcmle", e.theta.clone(), Some(e))
        }
        SeedMethod::Zeros => ("mcmle", vec![0.0; model.k()], None),
        SeedMethod::Vector(v) => ("mcmle", v.clone(), None),
    };
    if theta0.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain(format!("{label}: seed estimate is not finite")));
    }
    let mut est = fit_mcmle(g_obs, model, &theta0, mcmle)?;
    est.method = label.into();
    est.diagnostics.seed_estimate = seed_est.map(Box::new);
    est.wallclock_seconds = start.elapsed().as_secs_f64();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CovariateSet, SupportSpec};
    use crate::model::{ReferenceMeasure, TermSpec};
    use crate::oracle::{exact_mle, EnumSpec};

    fn toy() -> (ModelSpec, CountGraph, EnumSpec) {
        let cap = 3;
        let mut cov = CovariateSet::new(3);
        cov.insert_dyad("d", vec![0.0, 1.0, -0.5, 0.3, 0.0, 1.5, -1.0, 0.7, 0.0]).unwrap();
        let model = ModelSpec::new(
            vec![TermSpec::Sum, TermSpec::EdgeCov("d".into())],
            ReferenceMeasure::Poisson,
            SupportSpec::capped(cap).unwrap(),
            cov,
        )
        .unwrap();
        let g = CountGraph::from_rows(&[vec![0, 2, 1], vec![0, 0, 3], vec![2, 1, 0]]).unwrap();
        (model, g, EnumSpec::new(3, cap).unwrap())
    }

    fn quick(seed: u64) -> McmleConfig {
        McmleConfig { interval: 20, n_samples: 2000, max_iterations: 30, seed, ..Default::default() }
    }

    #[test]
    fn hull_extent() {
        let square = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0]];
        // Mean is the origin; a ray towards (0.5, 0) leaves the square at t = 2 (clipped).
        assert!((hull_ray_extent(&square, &[0.5, 0.0]) - 2.0).abs() < 1e-9);
        assert!((hull_ray_extent(&square, &[2.0, 0.0]) - 0.5).abs() < 1e-9);
        assert!((hull_ray_extent(&square, &[4.0, 4.0]) - 0.25).abs() < 1e-9);
        assert_eq!(step_length(1.5, 0.05), 1.0);
        assert!((step_length(0.5, 0.05) - 0.5 / 1.05).abs() < 1e-15);
    }

    #[test]
    fn hotelling_sanity() {
        let cov = DMatrix::identity(2, 2);
        assert_eq!(hotelling_p_value(&[1.0, 2.0], &cov, &[1.0, 2.0], 100.0), 1.0);
        assert!(hotelling_p_value(&[1.0, 2.0], &cov, &[1.5, 2.0], 100.0) < 1e-3);
        assert!(hotelling_p_value(&[1.0, 2.0], &cov, &[1.01, 2.0], 100.0) > 0.5);
    }

    #[test]
    fn exact_seed_is_a_fixed_point() {
        let (model, g, spec) = toy();
        let exact = exact_mle(&g, &model, spec).unwrap();
        let est = fit_mcmle(&g, &model, &exact.theta, &quick(1)).unwrap();
        assert!(est.converged, "{:?}", est.diagnostics);
        assert!(est.iterations <= 3, "{}", est.iterations);
        for t in 0..2 {
            assert!((est.theta[t] - exact.theta[t]).abs() < 3.0 * est.se[t]);
        }
        assert!(est.diagnostics.step_lengths.iter().all(|&g| g > 0.0 && g <= 1.0));
    }

    #[test]
    fn matches_exact_mle_from_zeros() {
        let (model, g, spec) = toy();
        let exact = exact_mle(&g, &model, spec).unwrap();
        let fisher_se = exact.standard_errors().unwrap();
        let est = fit_mcmle(&g, &model, &[0.0, 0.0], &quick(2)).unwrap();
        assert!(est.converged);
        for t in 0..2 {
            assert!((est.theta[t] - exact.theta[t]).abs() < 3.0 * est.se[t], "{:?} vs {:?}", est.theta, exact.theta);
            let ratio = est.se[t] / fisher_se[t];
            assert!((0.8..=1.25).contains(&ratio), "se ratio {ratio}");
        }
    }

    #[test]
    fn deterministic_under_fixed_workers() {
        let (model, g, _) = toy();
        let cfg = McmleConfig { chains: 2, workers: 2, ..quick(5) };
        let mut a = fit_mcmle(&g, &model, &[0.0, 0.0], &cfg).unwrap();
        let mut b = fit_mcmle(&g, &model, &[0.0, 0.0], &cfg).unwrap();
        let mut c = fit_mcmle(&g, &model, &[0.0, 0.0], &McmleConfig { workers: 1, ..cfg }).unwrap();
        a.wallclock_seconds = 0.0;
        b.wallclock_seconds = 0.0;
        c.wallclock_seconds = 0.0;
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn pipelines_agree() {
        let (model, g, _) = toy();
        let cd = CdConfig { n_chains: 128, max_rounds: 30, ..Default::default() };
        let a = fit_pipeline(&g, &model, &SeedMethod::Cd, &cd, &MpleOptions::default(), &quick(7)).unwrap();
        let b = fit_pipeline(&g, &model, &SeedMethod::Mple, &cd, &MpleOptions::default(), &quick(8)).unwrap();
        assert_eq!(a.method, "cd-mcmle");
        assert_eq!(b.method, "mple-mcmle");
        assert!(a.converged && b.converged);
        assert!(a.diagnostics.seed_estimate.is_some());
        for t in 0..2 {
            let joint = (a.se[t].powi(2) + b.se[t].powi(2)).sqrt();
            assert!((a.theta[t] - b.theta[t]).abs() < joint);
        }
        let v = fit_pipeline(&g, &model, &SeedMethod::Vector(vec![0.1, 0.2]), &cd, &MpleOptions::default(), &quick(9)).unwrap();
        let direct = fit_mcmle(&g, &model, &[0.1, 0.2], &quick(9)).unwrap();
        assert_eq!(v.theta, direct.theta);
        assert_eq!(v.method, "mcmle");
    }

    #[test]
    fn boundary_data_does_not_converge() {
        // All edges at the cap: the observed Sum is the hull's maximum.
        let (model, _, _) = toy();
        let g = CountGraph::from_rows(&[vec![0, 3, 3], vec![3, 0, 3], vec![3, 3, 0]]).unwrap();
        let cfg = McmleConfig { max_iterations: 5, ..quick(3) };
        let est = fit_mcmle(&g, &model, &[0.0, 0.0], &cfg).unwrap();
        assert!(!est.converged);
        assert_eq!(est.diagnostics.reruns, 1);
        assert_eq!(est.iterations, 10);
        assert!(est.diagnostics.step_lengths.iter().all(|&g| g > 0.0 && g < 1.0));
    }
}
