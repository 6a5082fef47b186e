//! Maximum pseudo-likelihood estimation.
//!
//! The per-edge conditional sums run over finite windows (see [`window`]),
//! optionally over a weighted subsample of dyads (see [`edges`]). Windows,
//! reference ratios and change scores are cached once; Newton iterations
//! then only touch the cache.

pub mod cache;
pub mod edges;
pub mod window;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cache::{build_cache, log_pseudolik, PseudolikCache, PseudolikEval, BATCH, DEFAULT_MEMORY_BUDGET};
pub use edges::{sample_edges, EdgeSample, EdgeSampleSpec, SamplingStrategy};
pub use window::{build_window, Window, WindowSpec, DEFAULT_LAMBDA_EDGE, DEFAULT_LAMBDA_GLOBAL};

use crate::error::{Error, Result};
use crate::estimate::{Diagnostics, Estimate};
use crate::graph::CountGraph;
use crate::linalg::{inverse_sqrt_diag, logsumexp, max_abs, solve_spd};
use crate::model::{dot, ModelSpec, TermSpec};
use crate::parallel::Executor;
use crate::rng::rng_from_seed;

pub const SINGULAR_MSG: &str = "pseudo-likelihood Hessian singular — check for collinear terms";

const MAX_STEP: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpleOptions {
    pub window: WindowSpec,
    pub sample: EdgeSampleSpec,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub workers: usize,
    pub memory_budget: usize,
}

impl Default for MpleOptions {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            sample: EdgeSampleSpec::all(),
            max_iter: 200,
            grad_tol: 1e-6,
            step_tol: 1e-8,
            workers: 1,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Starting point: zeros, except the Sum coefficient at `ln(mean positive value + 1)`.
pub fn initial_theta(g: &CountGraph, model: &ModelSpec) -> Vec<f64> {
    let mut theta = vec![0.0; model.k()];
    if let Some(t) = model.terms().iter().position(|t| *t == TermSpec::Sum) {
        let (sum, count) = g
            .values()
            .iter()
            .filter(|&&v| v > 0)
            .fold((0.0, 0usize), |(s, c), &v| (s + v as f64, c + 1));
        if count > 0 {
            theta[t] = (sum / count as f64 + 1.0).ln();
        }
    }
    theta
}

/// True when the scaled information matrix has no usable inverse.
fn is_singular(info: &DMatrix<f64>) -> bool {
    let k = info.nrows();
    let diag: Vec<f64> = (0..k).map(|t| info[(t, t)]).collect();
    if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return true;
    }
    let scaled = DMatrix::from_fn(k, k, |a, b| info[(a, b)] / (diag[a] * diag[b]).sqrt());
    let eig = scaled.symmetric_eigen().eigenvalues;
    eig.iter().copied().fold(f64::INFINITY, f64::min) < 1e-10
}

pub fn fit_mple(g: &CountGraph, model: &ModelSpec, opts: &MpleOptions) -> Result<Estimate> {
    let exec = Executor::new(opts.workers)?;
    fit_mple_with(g, model, opts, &exec)
}

pub fn fit_mple_with(g: &CountGraph, model: &ModelSpec, opts: &MpleOptions, exec: &Executor) -> Result<Estimate> {
    let start = Instant::now();
    model.check_graph(g)?;
    opts.window.validate()?;
    let sample = sample_edges(g, &opts.sample, &mut rng_from_seed(opts.sample.seed))?;
    let cache = build_cache(g, model, &sample, &opts.window, opts.memory_budget, exec)?;
    let weights = cache.weights().to_vec();
    let eval = |theta: &[f64]| log_pseudolik(&cache, theta, &weights, exec);

    let mut theta = initial_theta(g, model);
    let mut cur = eval(&theta)?;
    if is_singular(&(-&cur.hessian)) {
        return Err(Error::Singular(SINGULAR_MSG.into()));
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let info = -&cur.hessian;
        let step = match solve_spd(&info, &cur.gradient) {
            Some(s) => s,
            None => {
                let ridge = 1e-8 * (0..info.nrows()).map(|t| info[(t, t)].abs()).fold(1.0, f64::max);
                solve_spd(&(info + DMatrix::identity(theta.len(), theta.len()) * ridge), &cur.gradient)
                    .ok_or_else(|| Error::Singular(SINGULAR_MSG.into()))?
            }
        };
        let g_max = max_abs(cur.gradient.iter().copied());
        let s_max = max_abs(step.iter().copied());
        if g_max < opts.grad_tol && s_max < opts.step_tol {
            converged = true;
            break;
        }
        let mut t = if s_max > MAX_STEP { MAX_STEP / s_max } else { 1.0 };
        let tol = 1e-12 * cur.value.abs().max(1.0);
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let next = eval(&cand)?;
            if next.value.is_finite() && next.value >= cur.value - tol {
                accepted = Some((cand, next));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, next)) => {
                theta = cand;
                cur = next;
            }
            None => {
                // No ascent left at machine precision.
                converged = g_max < opts.grad_tol;
                break;
            }
        }
    }
    let info = -&cur.hessian;
    if converged && is_singular(&info) {
        return Err(Error::Singular(SINGULAR_MSG.into()));
    }
    let se = inverse_sqrt_diag(&info).unwrap_or_else(|| vec![f64::NAN; theta.len()]);
    let mut diagnostics = Diagnostics {
        objective: Some(cur.value),
        gradient_max_norm: Some(max_abs(cur.gradient.iter().copied())),
        edges_used: Some(cache.n_dyads()),
        ..Default::default()
    };
    if !converged {
        diagnostics.warnings.push(format!("Newton iterations stopped after {iterations} without convergence"));
    }
    Ok(Estimate {
        method: "mple".into(),
        terms: model.term_names(),
        theta,
        se,
        converged,
        iterations,
        wallclock_seconds: start.elapsed().as_secs_f64(),
        diagnostics,
    })
}

/// Log pseudo-likelihood of the full graph at `theta` with exhaustive dyads.
pub fn pseudolik_value(g: &CountGraph, model: &ModelSpec, window: &WindowSpec, theta: &[f64]) -> Result<f64> {
    let exec = Executor::Serial;
    let cache = build_cache(g, model, &EdgeSample::exhaustive(g), window, DEFAULT_MEMORY_BUDGET, &exec)?;
    Ok(log_pseudolik(&cache, theta, cache.weights(), &exec)?.value)
}

/// `ln P(Y_ij = l | rest, θ)` for every candidate `l` in the dyad's window.
pub fn conditional_logprob(
    g: &CountGraph,
    model: &ModelSpec,
    window: &WindowSpec,
    theta: &[f64],
    i: usize,
    j: usize,
) -> Result<Vec<(u32, f64)>> {
    if i == j || i >= g.n() || j >= g.n() {
        return Err(Error::Domain(format!("({i}, {j}) is not a dyad of a {}-node graph", g.n())));
    }
    if theta.len() != model.k() {
        return Err(Error::Domain(format!("θ has {} entries, model has {} terms", theta.len(), model.k())));
    }
    let sample = EdgeSample { dyads: vec![(i, j)], weights: vec![1.0] };
    let cache = build_cache(g, model, &sample, window, DEFAULT_MEMORY_BUDGET, &Executor::Serial)?;
    let s: Vec<f64> = (0..cache.window(0).len())
        .map(|e| cache.log_base(0)[e] + dot(theta, cache.delta(0, e)))
        .collect();
    let z = logsumexp(&s);
    Ok(cache.window(0).iter().zip(&s).map(|(&l, v)| (l, v - z)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CovariateSet, SupportSpec};
    use crate::model::{ReferenceMeasure, TermSpec};
    use crate::oracle::{exact_conditional, exact_mle, EnumSpec};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_graph(n: usize, max: u32, seed: u64) -> CountGraph {
        let mut rng = rng_from_seed(seed);
        let mut g = CountGraph::empty(n).unwrap();
        for (i, j) in g.dyads().collect::<Vec<_>>() {
            let v = if rng.random_bool(0.35) { 0 } else { rng.random_range(0..=max) };
            g.set(i, j, v);
        }
        g
    }

    fn rich_model(n: usize, seed: u64) -> ModelSpec {
        let mut rng = rng_from_seed(seed);
        let mut cov = CovariateSet::new(n);
        cov.insert_node("x", (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        cov.insert_dyad("d", (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let terms = "sum nonzero nodeocov(x) nodeicov(x) edgecov(d) mutual mixed2star"
            .split(' ')
            .map(|s| s.parse().unwrap())
            .collect();
        ModelSpec::new(terms, ReferenceMeasure::Poisson, SupportSpec::UNBOUNDED, cov).unwrap()
    }

    fn full_cache(g: &CountGraph, model: &ModelSpec, window: &WindowSpec) -> PseudolikCache {
        build_cache(g, model, &EdgeSample::exhaustive(g), window, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap()
    }

    fn one_dyad(i: usize, j: usize) -> EdgeSample {
        EdgeSample { dyads: vec![(i, j)], weights: vec![1.0] }
    }

    #[test]
    fn poisson_conditional_examples() {
        let model = ModelSpec::poisson(vec![TermSpec::Sum]).unwrap();
        let mut g = CountGraph::empty(2).unwrap();
        g.set(1, 0, 50);
        let window = WindowSpec::GlobalTruncation { lambda_global: 4.0 };
        let cache = build_cache(&g, &model, &one_dyad(0, 1), &window, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
        let e = log_pseudolik(&cache, &[0.0], &[1.0], &Executor::Serial).unwrap();
        assert!((e.value + 1.0).abs() < 1e-14, "{}", e.value);
        g.set(0, 1, 1);
        let cache = build_cache(&g, &model, &one_dyad(0, 1), &window, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
        let e = log_pseudolik(&cache, &[2f64.ln()], &[1.0], &Executor::Serial).unwrap();
        assert!((e.value - (2.0 * (-2f64).exp()).ln()).abs() < 1e-13);
        assert!((e.value + 1.306853).abs() < 1e-6);
    }

    #[test]
    fn cache_contents() {
        let model = ModelSpec::poisson(vec![TermSpec::Sum]).unwrap();
        let mut g = CountGraph::empty(2).unwrap();
        g.set(0, 1, 1);
        g.set(1, 0, 2);
        // y_max = 2 and λ = 1 give the window {0, 1, 2}.
        let window = WindowSpec::GlobalTruncation { lambda_global: 1.0 };
        let cache = build_cache(&g, &model, &one_dyad(0, 1), &window, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
        assert_eq!(cache.window(0), &[0, 1, 2]);
        let deltas: Vec<f64> = (0..3).map(|e| cache.delta(0, e)[0]).collect();
        assert_eq!(deltas, vec![-1.0, 0.0, 1.0]);
        assert_eq!(cache.log_base(0)[1], 0.0);
    }

    #[test]
    fn cache_matches_recomputation() {
        let g = random_graph(5, 6, 11);
        let model = rich_model(5, 12);
        let window = WindowSpec::edgewise(1.0);
        let mut rng = rng_from_seed(3);
        let sample = sample_edges(&g, &EdgeSampleSpec::new(SamplingStrategy::Uniform, 9, 0), &mut rng).unwrap();
        let cache = build_cache(&g, &model, &sample, &window, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
        for (d, &(i, j)) in cache.dyads().iter().enumerate() {
            let y = g.get(i, j);
            assert_eq!(cache.observed()[d], y);
            for (e, &l) in cache.window(d).iter().enumerate() {
                assert_eq!(cache.delta(d, e), model.change_score(&g, i, j, l).unwrap().as_slice());
                let ratio = crate::model::log_reference_ratio(y, l, ReferenceMeasure::Poisson);
                assert_eq!(cache.log_base(d)[e], ratio);
                if l == y {
                    assert!(cache.delta(d, e).iter().all(|&x| x == 0.0));
                    assert_eq!(cache.log_base(d)[e], 0.0);
                }
            }
        }
    }

    #[test]
    fn budget_error_names_bytes() {
        let g = random_graph(4, 5, 1);
        let model = ModelSpec::poisson(vec![TermSpec::Sum]).unwrap();
        let err = build_cache(&g, &model, &EdgeSample::exhaustive(&g), &WindowSpec::default(), 100, &Executor::Serial)
            .unwrap_err();
        match err {
            Error::Budget { required, budget } => {
                assert!(required > 100);
                assert_eq!(budget, 100);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_non_finite_theta() {
        let g = random_graph(3, 3, 2);
        let model = ModelSpec::poisson(vec![TermSpec::Sum]).unwrap();
        let cache = full_cache(&g, &model, &WindowSpec::default());
        assert!(matches!(
            log_pseudolik(&cache, &[f64::NAN], cache.weights(), &Executor::Serial),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = random_graph(5, 7, 21);
        let model = rich_model(5, 22);
        let cache = full_cache(&g, &model, &WindowSpec::edgewise(1.0));
        let mut rng = rng_from_seed(23);
        let w = cache.weights().to_vec();
        for _ in 0..5 {
            let theta: Vec<f64> = (0..model.k()).map(|_| rng.random_range(-0.3..0.3)).collect();
            let e = log_pseudolik(&cache, &theta, &w, &Executor::Serial).unwrap();
            let h = 1e-5;
            for t in 0..model.k() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[t] += h;
                dn[t] -= h;
                let eu = log_pseudolik(&cache, &up, &w, &Executor::Serial).unwrap();
                let ed = log_pseudolik(&cache, &dn, &w, &Executor::Serial).unwrap();
                let fd = (eu.value - ed.value) / (2.0 * h);
                let scale = e.gradient[t].abs().max(1.0);
                assert!((fd - e.gradient[t]).abs() / scale < 1e-5, "grad {t}: {fd} vs {}", e.gradient[t]);
                for s in 0..model.k() {
                    let fd = (eu.gradient[s] - ed.gradient[s]) / (2.0 * h);
                    let scale = e.hessian[(s, t)].abs().max(1.0);
                    assert!((fd - e.hessian[(s, t)]).abs() / scale < 1e-5, "hess {s},{t}");
                }
            }
        }
    }

    #[test]
    fn conditional_logprob_matches_enumeration() {
        let cap = 4;
        let model = ModelSpec::new(
            vec![TermSpec::Sum, TermSpec::MutualMin],
            ReferenceMeasure::Poisson,
            SupportSpec::capped(cap).unwrap(),
            CovariateSet::new(0),
        )
        .unwrap();
        let g = CountGraph::from_rows(&[vec![0, 2, 0], vec![3, 0, 1], vec![4, 0, 0]]).unwrap();
        let theta = [0.4, -0.3];
        let got = conditional_logprob(&g, &model, &WindowSpec::default(), &theta, 1, 0).unwrap();
        let want = exact_conditional(&g, &model, &theta, 1, 0, EnumSpec::new(3, cap).unwrap()).unwrap();
        assert_eq!(got.len(), want.len());
        for (l, lp) in got {
            assert!((lp - want[l as usize].ln()).abs() < 1e-12);
        }
        assert!(conditional_logprob(&g, &model, &WindowSpec::default(), &theta, 2, 2).is_err());
    }

    #[test]
    fn window_exactness_against_enumeration() {
        let cap = 3;
        let mut cov = CovariateSet::new(3);
        cov.insert_node("x", vec![0.5, -1.0, 0.2]).unwrap();
        let terms = vec![TermSpec::Sum, TermSpec::Nonzero, TermSpec::NodeOCov("x".into()), TermSpec::MutualMin, TermSpec::MixedTwoStarMin];
        let spec = EnumSpec::new(3, cap).unwrap();
        for reference in [ReferenceMeasure::Poisson, ReferenceMeasure::ConstantCapped] {
            let model = ModelSpec::new(terms.clone(), reference, SupportSpec::capped(cap).unwrap(), cov.clone()).unwrap();
            let mut rng = rng_from_seed(31);
            for _ in 0..4 {
                let mut g = CountGraph::empty(3).unwrap();
                for (i, j) in g.dyads().collect::<Vec<_>>() {
                    g.set(i, j, rng.random_range(0..=cap));
                }
                g.set(0, 1, 1);
                let theta: Vec<f64> = (0..model.k()).map(|_| rng.random_range(-0.8..0.8)).collect();
                let cache = full_cache(&g, &model, &WindowSpec::GlobalTruncation { lambda_global: 4.0 });
                let got = log_pseudolik(&cache, &theta, cache.weights(), &Executor::Serial).unwrap().value;
                let mut want = 0.0;
                for (i, j) in g.dyads() {
                    let p = exact_conditional(&g, &model, &theta, i, j, spec).unwrap();
                    want += p[g.get(i, j) as usize].ln();
                }
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn subsample_weighted_value_is_unbiased() {
        let g = random_graph(12, 8, 41);
        let model = rich_model(12, 42);
        let theta: Vec<f64> = vec![0.3, -0.4, 0.1, -0.1, 0.2, 0.05, -0.01];
        let window = WindowSpec::edgewise(1.0);
        let full = pseudolik_value(&g, &model, &window, &theta).unwrap();
        for strategy in [SamplingStrategy::Uniform, SamplingStrategy::TieNoTie, SamplingStrategy::FlatValue] {
            let reps = 300;
            let vals: Vec<f64> = (0..reps)
                .map(|r| {
                    let spec = EdgeSampleSpec::new(strategy, 40, r);
                    let s = sample_edges(&g, &spec, &mut rng_from_seed(r)).unwrap();
                    let c = build_cache(&g, &model, &s, &window, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
                    log_pseudolik(&c, &theta, c.weights(), &Executor::Serial).unwrap().value
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            assert!((mean - full).abs() < 3.0 * se, "{strategy:?}: {mean} vs {full} (se {se})");
        }
    }

    #[test]
    fn sum_only_recovers_log_mean() {
        let g = random_graph(8, 6, 51);
        let model = ModelSpec::poisson(vec![TermSpec::Sum]).unwrap();
        let est = fit_mple(&g, &model, &MpleOptions::default()).unwrap();
        let mean = g.values().iter().map(|&v| v as f64).sum::<f64>() / g.n_dyads() as f64;
        assert!(est.converged);
        assert!((est.theta[0] - mean.ln()).abs() < 1e-8, "{} vs {}", est.theta[0], mean.ln());
        assert!(est.se[0] > 0.0);
        assert_eq!(est.method, "mple");
    }

    #[test]
    fn dyad_independent_matches_exact_mle() {
        let cap = 4;
        let mut cov = CovariateSet::new(3);
        cov.insert_dyad("d", vec![0.0, 1.0, -0.5, 0.3, 0.0, 2.0, -1.0, 0.7, 0.0]).unwrap();
        let terms = vec![TermSpec::Sum, TermSpec::EdgeCov("d".into())];
        let spec = EnumSpec::new(3, cap).unwrap();
        for reference in [ReferenceMeasure::Poisson, ReferenceMeasure::ConstantCapped] {
            let model = ModelSpec::new(terms.clone(), reference, SupportSpec::capped(cap).unwrap(), cov.clone()).unwrap();
            let g = CountGraph::from_rows(&[vec![0, 2, 1], vec![0, 0, 3], vec![4, 1, 0]]).unwrap();
            let exact = exact_mle(&g, &model, spec).unwrap();
            let est = fit_mple(&g, &model, &MpleOptions::default()).unwrap();
            assert!(est.converged);
            for t in 0..2 {
                assert!((est.theta[t] - exact.theta[t]).abs() < 1e-4, "{:?} vs {:?}", est.theta, exact.theta);
            }
        }
    }

    #[test]
    fn collinear_terms_are_singular() {
        let g = random_graph(4, 5, 61);
        let mut cov = CovariateSet::new(4);
        cov.insert_dyad("ones", vec![1.0; 16]).unwrap();
        let model = ModelSpec::new(
            vec![TermSpec::Sum, TermSpec::EdgeCov("ones".into())],
            ReferenceMeasure::Poisson,
            SupportSpec::UNBOUNDED,
            cov,
        )
        .unwrap();
        let err = fit_mple(&g, &model, &MpleOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), SINGULAR_MSG);
    }

    #[test]
    fn deterministic_across_runs_and_workers() {
        let g = random_graph(9, 9, 71);
        let model = rich_model(9, 72);
        let opts = MpleOptions {
            sample: EdgeSampleSpec::new(SamplingStrategy::TieNoTie, 50, 5),
            window: WindowSpec::edgewise(1.0),
            ..Default::default()
        };
        let mut a = fit_mple(&g, &model, &opts).unwrap();
        let mut b = fit_mple(&g, &model, &opts).unwrap();
        a.wallclock_seconds = 0.0;
        b.wallclock_seconds = 0.0;
        assert_eq!(a, b);
        let mut c = fit_mple(&g, &model, &MpleOptions { workers: 3, ..opts }).unwrap();
        c.wallclock_seconds = 0.0;
        for (x, y) in a.theta.iter().zip(&c.theta) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn initial_sum_coefficient() {
        let g = CountGraph::from_rows(&[vec![0, 3], vec![1, 0]]).unwrap();
        let model = ModelSpec::poisson(vec![TermSpec::Nonzero, TermSpec::Sum]).unwrap();
        assert_eq!(initial_theta(&g, &model), vec![0.0, 3f64.ln()]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hessian_is_negative_semidefinite(seed in 0u64..1000, scale in 0.0f64..1.0) {
            let g = random_graph(5, 6, seed);
            let model = rich_model(5, seed + 1);
            let cache = full_cache(&g, &model, &WindowSpec::edgewise(1.0));
            let mut rng = rng_from_seed(seed + 2);
            let theta: Vec<f64> = (0..model.k()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let e = log_pseudolik(&cache, &theta, cache.weights(), &Executor::Serial).unwrap();
            let eig = e.hessian.clone().symmetric_eigen().eigenvalues;
            let bound = 1e-9 * e.hessian.amax().max(1.0);
            prop_assert!(eig.iter().all(|&l| l <= bound), "{:?}", eig);
        }

        #[test]
        fn edgewise_window_holds_conditional_mass(y in 1u32..3000) {
            // Conditional of a Sum-only Poisson model at θ = ln y is Poisson(y).
            let model = ModelSpec::poisson(vec![TermSpec::Sum]).unwrap();
            let mut g = CountGraph::empty(2).unwrap();
            g.set(0, 1, y);
            let theta = [(y as f64).ln()];
            let narrow = build_cache(&g, &model, &one_dyad(0, 1), &WindowSpec::edgewise(1.0), DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
            let wide = build_cache(&g, &model, &one_dyad(0, 1), &WindowSpec::GlobalTruncation { lambda_global: 4.0 }, DEFAULT_MEMORY_BUDGET, &Executor::Serial).unwrap();
            let lp_narrow = log_pseudolik(&narrow, &theta, &[1.0], &Executor::Serial).unwrap().value;
            let lp_wide = log_pseudolik(&wide, &theta, &[1.0], &Executor::Serial).unwrap().value;
            // ln P_narrow - ln P_wide = ln(mass_wide / mass_narrow)
            let coverage = (lp_wide - lp_narrow).exp();
            prop_assert!(coverage >= 0.999, "coverage {coverage}");
        }
    }
}
