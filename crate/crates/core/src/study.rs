//! Parameter-recovery studies and their evaluation metrics.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cd::{fit_cd, CdConfig};
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::graph::{CountGraph, CovariateSet, SupportSpec};
use crate::mcmle::{fit_pipeline, McmleConfig, SeedMethod};
use crate::model::{ModelSpec, ReferenceMeasure, TermSpec};
use crate::mple::{fit_mple, MpleOptions};
use crate::oracle::{exact_mle, EnumSpec};
use crate::parallel::Executor;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::{simulate, ProposalKind, SamplerConfig};

/// Successful share of replicates a method needs for its metrics to count.
pub const MIN_SUCCESS_FRACTION: f64 = 0.8;

// ---------------------------------------------------------------- metrics

/// Absolute relative bias, or absolute bias when the truth is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arb {
    pub value: f64,
    pub relative: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn arb(estimates: &[f64], truth: f64) -> Arb {
    if truth == 0.0 {
        Arb { value: mean(estimates).abs(), relative: false }
    } else {
        let rel: Vec<f64> = estimates.iter().map(|e| (e - truth) / truth).collect();
        Arb { value: mean(&rel).abs(), relative: true }
    }
}

/// Root mean squared deviation from the mean, divisor `m`.
pub fn true_se(estimates: &[f64]) -> f64 {
    let mu = mean(estimates);
    (estimates.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt()
}

pub fn rmse(estimates: &[f64], truth: f64) -> f64 {
    (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt()
}

/// `ln(mean(ŝe) / se)`; `None` when the true SE is zero.
pub fn calibration(se_hats: &[f64], true_se_value: f64) -> Option<f64> {
    (true_se_value > 0.0).then(|| (mean(se_hats) / true_se_value).ln())
}

/// Two-sided normal quantile for a confidence level, e.g. 1.96 for 0.95.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Share of open intervals `(θ̂ - zŝe, θ̂ + zŝe)` containing the truth.
pub fn coverage(estimates: &[f64], se_hats: &[f64], truth: f64, level: f64) -> f64 {
    assert_eq!(estimates.len(), se_hats.len(), "estimate and standard-error lengths differ");
    let z = normal_quantile(level);
    let hits = estimates
        .iter()
        .zip(se_hats)
        .filter(|&(&e, &s)| e - z * s < truth && truth < e + z * s)
        .count();
    hits as f64 / estimates.len() as f64
}

// ---------------------------------------------------------------- config

/// Covariates for a synthetic ground truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovariateBlock {
    /// Node covariates drawn i.i.d. standard normal.
    pub generate_node: Vec<String>,
    /// Dyad covariates drawn i.i.d. standard normal.
    pub generate_dyad: Vec<String>,
    pub node: BTreeMap<String, Vec<f64>>,
    /// Row-major `n × n` matrices.
    pub dyad: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub terms: Vec<TermSpec>,
    #[serde(default = "default_reference")]
    pub reference: ReferenceMeasure,
    #[serde(default)]
    pub cap: Option<u32>,
    #[serde(default)]
    pub covariates: CovariateBlock,
}

fn default_reference() -> ReferenceMeasure {
    ReferenceMeasure::Poisson
}

impl ModelBlock {
    pub fn build(&self, n: usize, seed: u64) -> Result<ModelSpec> {
        self.build_with(CovariateSet::new(n), seed)
    }

    /// Adds the block's generated and inline covariates to `cov`, then builds the model.
    pub fn build_with(&self, mut cov: CovariateSet, seed: u64) -> Result<ModelSpec> {
        let n = cov.n();
        let mut rng = rng_from_seed(derive_seed(seed, 0xC0));
        for name in &self.covariates.generate_node {
            cov.insert_node(name.clone(), (0..n).map(|_| rng.sample(StandardNormal)).collect())?;
        }
        for name in &self.covariates.generate_dyad {
            cov.insert_dyad(name.clone(), (0..n * n).map(|_| rng.sample(StandardNormal)).collect())?;
        }
        for (name, v) in &self.covariates.node {
            cov.insert_node(name.clone(), v.clone())?;
        }
        for (name, v) in &self.covariates.dyad {
            cov.insert_dyad(name.clone(), v.clone())?;
        }
        let support = match self.cap {
            Some(c) => SupportSpec::capped(c)?,
            None => SupportSpec::UNBOUNDED,
        };
        ModelSpec::new(self.terms.clone(), self.reference, support, cov)
    }
}

/// Settings of the chain producing ground-truth networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub interval: u64,
    #[serde(default)]
    pub burnin: Option<u64>,
    #[serde(default)]
    pub proposal: ProposalKind,
}

/// One estimator in a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodKind {
    Mple(MpleOptions),
    Cd(CdConfig),
    Mcmle(PipelineConfig),
    /// Exact MLE by enumeration; tiny capped models only.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed_method")]
    pub seed_method: SeedMethod,
    #[serde(default)]
    pub cd: CdConfig,
    #[serde(default)]
    pub mple: MpleOptions,
    #[serde(default)]
    pub mcmle: McmleConfig,
}

fn default_seed_method() -> SeedMethod {
    SeedMethod::Mple
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { seed_method: SeedMethod::Mple, cd: CdConfig::default(), mple: MpleOptions::default(), mcmle: McmleConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// Report label; defaults to the estimator's method tag.
    #[serde(default)]
    pub label: Option<String>,
    pub fit: MethodKind,
}

impl MethodSpec {
    pub fn new(fit: MethodKind) -> Self {
        Self { label: None, fit }
    }

    pub fn labeled(label: impl Into<String>, fit: MethodKind) -> Self {
        Self { label: Some(label.into()), fit }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.fit {
            MethodKind::Mple(_) => "mple".into(),
            MethodKind::Cd(_) => "cd".into(),
            MethodKind::Mcmle(p) => match p.seed_method {
                SeedMethod::Cd => "cd-mcmle".into(),
                SeedMethod::Mple => "mple-mcmle".into(),
                _ => "mcmle".into(),
            },
            MethodKind::Oracle => "oracle".into(),
        }
    }

    /// Fits with every internal seed replaced by `seed` and a single worker.
    pub fn fit(&self, g: &CountGraph, model: &ModelSpec, seed: u64) -> Result<Estimate> {
        match &self.fit {
            MethodKind::Mple(o) => {
                let mut o = o.clone();
                o.sample.seed = seed;
                o.workers = 1;
                fit_mple(g, model, &o)
            }
            MethodKind::Cd(c) => fit_cd(g, model, &CdConfig { seed, workers: 1, ..c.clone() }),
            MethodKind::Mcmle(p) => {
                let mut mple = p.mple.clone();
                mple.sample.seed = derive_seed(seed, 1);
                mple.workers = 1;
                let cd = CdConfig { seed: derive_seed(seed, 2), workers: 1, ..p.cd.clone() };
                let mcmle = McmleConfig { seed: derive_seed(seed, 3), workers: 1, ..p.mcmle.clone() };
                fit_pipeline(g, model, &p.seed_method, &cd, &mple, &mcmle)
            }
            MethodKind::Oracle => {
                let start = Instant::now();
                let cap = model.support().cap.ok_or_else(|| Error::Config("oracle needs a capped support".into()))?;
                let mle = exact_mle(g, model, EnumSpec::new(g.n(), cap)?)?;
                let se = mle.standard_errors().unwrap_or_else(|| vec![f64::NAN; model.k()]);
                Ok(Estimate {
                    method: "oracle".into(),
                    terms: model.term_names(),
                    theta: mle.theta,
                    se,
                    converged: true,
                    iterations: 0,
                    wallclock_seconds: start.elapsed().as_secs_f64(),
                    diagnostics: Default::default(),
                })
            }
        }
    }
}

fn default_level() -> f64 {
    0.95
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub n: usize,
    pub model: ModelBlock,
    pub theta_star: Vec<f64>,
    pub generator: GeneratorConfig,
    pub replicates: usize,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config(format!("a study needs at least 2 replicates, got {}", self.replicates)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level must lie in (0, 1), got {}", self.level)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("a study needs at least one method".into()));
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return Err(Error::Config("method labels must be unique".into()));
        }
        if self.theta_star.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("theta_star must be finite".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- results

/// One coefficient of one fit. `success` means converged with usable standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub replicate: usize,
    pub method: String,
    pub coefficient: String,
    pub estimate: f64,
    pub se: f64,
    pub converged: bool,
    pub success: bool,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub replicate: usize,
    pub method: String,
    /// NaN when the fit raised an error.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub coefficient: String,
    pub arb: f64,
    pub se: f64,
    pub rmse: f64,
    pub calibration: f64,
    pub coverage: f64,
    pub mean_seconds: f64,
    pub failures: usize,
    /// `absolute_bias`, `calibration_undefined`, `insufficient_replicates`, separated by `;`.
    pub flags: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub level: f64,
    pub replicates: usize,
    pub truth: Vec<f64>,
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn row(&self, method: &str, coefficient: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.method == method && r.coefficient == coefficient)
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    pub terms: Vec<String>,
    pub methods: Vec<String>,
    pub raw: Vec<RawRecord>,
    pub timing: Vec<TimingRecord>,
    pub report: MetricsReport,
}

/// Builds the metric table from persisted records.
pub fn compute_metrics(
    terms: &[String],
    methods: &[String],
    truth: &[f64],
    replicates: usize,
    level: f64,
    raw: &[RawRecord],
    timing: &[TimingRecord],
) -> MetricsReport {
    let mut rows = Vec::new();
    for method in methods {
        let secs: Vec<f64> =
            timing.iter().filter(|t| &t.method == method && t.seconds.is_finite()).map(|t| t.seconds).collect();
        let mean_seconds = if secs.is_empty() { f64::NAN } else { mean(&secs) };
        for (t, term) in terms.iter().enumerate() {
            let recs: Vec<&RawRecord> =
                raw.iter().filter(|r| &r.method == method && &r.coefficient == term && r.success).collect();
            let est: Vec<f64> = recs.iter().map(|r| r.estimate).collect();
            let se_hat: Vec<f64> = recs.iter().map(|r| r.se).collect();
            let failures = replicates - recs.len();
            let mut flags = Vec::new();
            let (a, s, r, c, cov) = if est.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let a = arb(&est, truth[t]);
                if !a.relative {
                    flags.push("absolute_bias");
                }
                let s = true_se(&est);
                let c = calibration(&se_hat, s).unwrap_or_else(|| {
                    flags.push("calibration_undefined");
                    f64::NAN
                });
                (a.value, s, rmse(&est, truth[t]), c, coverage(&est, &se_hat, truth[t], level))
            };
            if (recs.len() as f64) < MIN_SUCCESS_FRACTION * replicates as f64 {
                flags.push("insufficient_replicates");
            }
            rows.push(MetricRow {
                method: method.clone(),
                coefficient: term.clone(),
                arb: a,
                se: s,
                rmse: r,
                calibration: c,
                coverage: cov,
                mean_seconds,
                failures,
                flags: flags.join(";"),
            });
        }
    }
    MetricsReport { level, replicates, truth: truth.to_vec(), rows }
}

/// Draws `m` networks from one long chain started at the empty graph.
pub fn generate_networks(
    model: &ModelSpec,
    theta: &[f64],
    n: usize,
    generator: &GeneratorConfig,
    m: usize,
    seed: u64,
) -> Result<Vec<CountGraph>> {
    let cfg = SamplerConfig {
        proposal: generator.proposal,
        burnin: generator.burnin.unwrap_or(16 * generator.interval),
        interval: generator.interval,
        n_samples: m,
        seed: derive_seed(seed, 0x6E),
    };
    Ok(simulate(model, theta, &CountGraph::empty(n)?, &cfg)?.samples)
}

pub fn run_recovery_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let model = cfg.model.build(cfg.n, cfg.seed)?;
    run_study_with_model(&model, cfg)
}

/// Runs a study on an already-built model; `cfg.model` is ignored.
pub fn run_study_with_model(model: &ModelSpec, cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.theta_star.len() != model.k() {
        return Err(Error::Config(format!("theta_star has {} entries, model has {} terms", cfg.theta_star.len(), model.k())));
    }
    let graphs = generate_networks(model, &cfg.theta_star, cfg.n, &cfg.generator, cfg.replicates, cfg.seed)?;
    let terms = model.term_names();
    let labels: Vec<String> = cfg.methods.iter().map(MethodSpec::label).collect();
    let exec = Executor::new(cfg.workers)?;
    let per_rep = exec.map(graphs.len(), |rep| {
        let mut raw = Vec::new();
        let mut timing = Vec::new();
        for (mi, method) in cfg.methods.iter().enumerate() {
            let seed = derive_seed(derive_seed(cfg.seed, rep as u64 + 1), mi as u64);
            let start = Instant::now();
            let fit = method.fit(&graphs[rep], model, seed);
            let seconds = start.elapsed().as_secs_f64();
            match fit {
                Ok(est) => {
                    let success = est.is_usable();
                    for (t, term) in terms.iter().enumerate() {
                        raw.push(RawRecord {
                            replicate: rep,
                            method: labels[mi].clone(),
                            coefficient: term.clone(),
                            estimate: est.theta[t],
                            se: est.se[t],
                            converged: est.converged,
                            success,
                            error: String::new(),
                        });
                    }
                    timing.push(TimingRecord { replicate: rep, method: labels[mi].clone(), seconds });
                }
                Err(e) => {
                    for term in &terms {
                        raw.push(RawRecord {
                            replicate: rep,
                            method: labels[mi].clone(),
                            coefficient: term.clone(),
                            estimate: f64::NAN,
                            se: f64::NAN,
                            converged: false,
                            success: false,
                            error: e.to_string(),
                        });
                    }
                    timing.push(TimingRecord { replicate: rep, method: labels[mi].clone(), seconds: f64::NAN });
                }
            }
        }
        (raw, timing)
    });
    let mut raw = Vec::new();
    let mut timing = Vec::new();
    for (r, t) in per_rep {
        raw.extend(r);
        timing.extend(t);
    }
    let report = compute_metrics(&terms, &labels, &cfg.theta_star, cfg.replicates, cfg.level, &raw, &timing);
    Ok(StudyResult { terms, methods: labels, raw, timing, report })
}

// ---------------------------------------------------------------- persistence

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))).collect()
}

/// The metric table as written to `report.csv`; flags live in `report.json` only.
#[derive(Serialize)]
struct ReportCsvRow<'a> {
    method: &'a str,
    coefficient: &'a str,
    arb: f64,
    se: f64,
    rmse: f64,
    calibration: f64,
    coverage: f64,
    mean_seconds: f64,
    failures: usize,
}

impl<'a> From<&'a MetricRow> for ReportCsvRow<'a> {
    fn from(r: &'a MetricRow) -> Self {
        Self {
            method: &r.method,
            coefficient: &r.coefficient,
            arb: r.arb,
            se: r.se,
            rmse: r.rmse,
            calibration: r.calibration,
            coverage: r.coverage,
            mean_seconds: r.mean_seconds,
            failures: r.failures,
        }
    }
}

/// Writes `raw.csv`, `timing.csv`, `report.csv` and `report.json` into `dir`.
pub fn write_study_outputs(dir: impl AsRef<Path>, result: &StudyResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(dir.join("raw.csv"), &result.raw)?;
    write_csv(dir.join("timing.csv"), &result.timing)?;
    let table: Vec<ReportCsvRow> = result.report.rows.iter().map(ReportCsvRow::from).collect();
    write_csv(dir.join("report.csv"), &table)?;
    let json = serde_json::to_string_pretty(&result.report)?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::Distribution;

    #[test]
    fn arb_examples() {
        assert!(arb(&[1.1, 0.9], 1.0).value.abs() < 1e-15);
        assert!((arb(&[1.1, 1.3], 1.0).value - 0.2).abs() < 1e-12);
        assert!((arb(&[-2.2], -2.0).value - 0.1).abs() < 1e-12);
        let zero = arb(&[0.1, 0.3], 0.0);
        assert!(!zero.relative);
        assert!((zero.value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn se_examples() {
        assert_eq!(true_se(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(true_se(&[0.0, 2.0]), 1.0);
        assert!((true_se(&[1.0, 2.0, 3.0, 4.0]) - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((true_se(&[1.0, 2.0, 3.0, 4.0]) - 1.1180).abs() < 1e-4);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.5, 1.5], 1.5), 0.0);
        assert_eq!(rmse(&[0.0, 2.0], 1.0), 1.0);
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibration(&[2.0, 2.0], 2.0), Some(0.0));
        assert!((calibration(&[std::f64::consts::E; 3], 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((calibration(&[7.39], 1.0).unwrap() - 2.0).abs() < 1e-3);
        assert_eq!(calibration(&[1.0], 0.0), None);
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage(&[1.0, 1.0], &[0.1, 3.0], 1.0, 0.95), 1.0);
        assert_eq!(coverage(&[1.0, 1.0], &[0.0, 0.0], 1.0, 0.95), 0.0);
        assert!((normal_quantile(0.95) - 1.959964).abs() < 1e-6);
        let normal = rand_distr::Normal::new(0.5, 2.0).unwrap();
        let mut rng = rng_from_seed(8);
        let est: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let c = coverage(&est, &vec![2.0; est.len()], 0.5, 0.95);
        assert!((c - 0.95).abs() < 0.01, "{c}");
    }

    proptest! {
        #[test]
        fn bias_variance_identity(xs in prop::collection::vec(-100.0f64..100.0, 1..50), truth in -10.0f64..10.0) {
            let bias = mean(&xs) - truth;
            let lhs = rmse(&xs, truth).powi(2);
            let rhs = bias.powi(2) + true_se(&xs).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0) * 100.0);
        }

        #[test]
        fn coverage_in_unit_interval(xs in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..40)) {
            let est: Vec<f64> = xs.iter().map(|p| p.0).collect();
            let se: Vec<f64> = xs.iter().map(|p| p.1).collect();
            let c = coverage(&est, &se, 0.3, 0.9);
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    fn toy_config(methods: Vec<MethodSpec>, m: usize) -> StudyConfig {
        StudyConfig {
            n: 3,
            model: ModelBlock {
                terms: vec![TermSpec::Sum, TermSpec::Nonzero],
                reference: ReferenceMeasure::Poisson,
                cap: Some(3),
                covariates: CovariateBlock::default(),
            },
            theta_star: vec![0.3, -0.4],
            generator: GeneratorConfig { interval: 50, burnin: None, proposal: ProposalKind::RandomDyad },
            replicates: m,
            methods,
            level: 0.95,
            workers: 1,
            seed: 17,
        }
    }

    fn strip_timing(mut r: StudyResult) -> (Vec<RawRecord>, Vec<MetricRow>) {
        for row in &mut r.report.rows {
            row.mean_seconds = 0.0;
        }
        (r.raw, r.report.rows)
    }

    #[test]
    fn seeded_study_is_deterministic() {
        let cfg = toy_config(vec![MethodSpec::new(MethodKind::Mple(MpleOptions::default()))], 2);
        let a = run_recovery_study(&cfg).unwrap();
        let b = run_recovery_study(&cfg).unwrap();
        let c = run_recovery_study(&StudyConfig { workers: 2, ..cfg }).unwrap();
        assert_eq!(a.raw.len(), 4);
        let (ra, ma) = strip_timing(a);
        let (rb, mb) = strip_timing(b);
        let (rc, _) = strip_timing(c);
        assert_eq!(ra, rb);
        assert_eq!(ma, mb);
        assert_eq!(ra, rc);
    }

    #[test]
    fn oracle_coverage_is_nominal() {
        let m = 400;
        let mut cfg = toy_config(vec![MethodSpec::new(MethodKind::Oracle)], m);
        cfg.model.terms = vec![TermSpec::Sum];
        cfg.model.cap = Some(5);
        cfg.theta_star = vec![2.5f64.ln()];
        let res = run_recovery_study(&cfg).unwrap();
        for row in &res.report.rows {
            // Non-existent MLEs count as failures; coverage is over the remaining replicates.
            let used = (m - row.failures) as f64;
            let sigma = (0.95 * 0.05 / used).sqrt();
            assert!((row.coverage - 0.95).abs() < 3.0 * sigma, "{row:?}");
        }
    }

    #[test]
    fn outputs_round_trip_bit_identically() {
        let cfg = toy_config(
            vec![
                MethodSpec::new(MethodKind::Mple(MpleOptions::default())),
                MethodSpec::new(MethodKind::Cd(CdConfig { n_chains: 32, max_rounds: 10, ..Default::default() })),
            ],
            6,
        );
        let res = run_recovery_study(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_study_outputs(dir.path(), &res).unwrap();
        let raw: Vec<RawRecord> = read_csv(dir.path().join("raw.csv")).unwrap();
        let timing: Vec<TimingRecord> = read_csv(dir.path().join("timing.csv")).unwrap();
        assert_eq!(raw.len(), res.raw.len());
        for (a, b) in raw.iter().zip(&res.raw) {
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            assert_eq!(a.se.to_bits(), b.se.to_bits());
        }
        let again = compute_metrics(&res.terms, &res.methods, &cfg.theta_star, cfg.replicates, cfg.level, &raw, &timing);
        let same = |x: f64, y: f64| x.to_bits() == y.to_bits();
        for (a, b) in again.rows.iter().zip(&res.report.rows) {
            assert!(same(a.arb, b.arb) && same(a.se, b.se) && same(a.rmse, b.rmse));
            assert!(same(a.calibration, b.calibration) && same(a.coverage, b.coverage));
            assert!(same(a.mean_seconds, b.mean_seconds));
            assert_eq!(a.failures, b.failures);
        }
        let header = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(header.lines().next(), Some("method,coefficient,arb,se,rmse,calibration,coverage,mean_seconds,failures"));
    }

    #[test]
    fn insufficient_replicates_are_flagged() {
        let terms = vec!["sum".to_string()];
        let methods = vec!["m".to_string()];
        let mk = |rep, success| RawRecord {
            replicate: rep,
            method: "m".into(),
            coefficient: "sum".into(),
            estimate: 1.0,
            se: 0.1,
            converged: success,
            success,
            error: String::new(),
        };
        let raw = vec![mk(0, true), mk(1, false), mk(2, true)];
        let rep = compute_metrics(&terms, &methods, &[1.0], 3, 0.95, &raw, &[]);
        assert_eq!(rep.rows[0].failures, 1);
        assert!(rep.rows[0].flags.contains("insufficient_replicates"));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = toy_config(
            vec![
                MethodSpec::new(MethodKind::Mple(MpleOptions::default())),
                MethodSpec::labeled("cd80", MethodKind::Cd(CdConfig { steps: 80, ..Default::default() })),
                MethodSpec::new(MethodKind::Mcmle(PipelineConfig::default())),
            ],
            10,
        );
        let json = serde_json::to_string(&cfg).unwrap();
        let back: StudyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let short: MethodSpec = serde_json::from_str(r#"{"fit": {"method": "cd", "steps": 80}}"#).unwrap();
        assert_eq!(short.label(), "cd");
        assert!(serde_json::from_str::<MethodSpec>(r#"{"fit": {"method": "cd", "stepz": 80}}"#).is_err());
    }
}
