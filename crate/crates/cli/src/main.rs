//! `vergm`: fit, simulate and study count-valued ERGMs.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vergm::cd::fit_cd;
use vergm::graph::summarize;
use vergm::mcmle::fit_pipeline;
use vergm::mple::{fit_mple, SamplingStrategy, WindowSpec, DEFAULT_LAMBDA_EDGE, DEFAULT_LAMBDA_GLOBAL};
use vergm::rng::derive_seed;
use vergm::sampler::{mcmc_diagnostics, simulate};
use vergm::study::{run_recovery_study, write_study_outputs, MethodKind, MethodSpec, ModelBlock};
use vergm::{CountGraph, Estimate, ReferenceMeasure, SamplerConfig, SeedMethod, StudyConfig, TermSpec};

use config::{DataBlock, FitConfig, FitMethod, Manifest, SimulateConfig};

const NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "vergm", version, about = "Estimation for count-valued exponential random graph models")]
#[command(after_help = "Node ids in edgelists are 1-based. Flags override keys in --config files.\n\
    Exit codes: 0 ok, 1 usage or data error, 2 fit did not converge.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics of an edgelist.
    Summarize(SummarizeArgs),
    /// Estimate model coefficients.
    Fit(Box<FitArgs>),
    /// Draw networks from a model by MCMC.
    Simulate(SimulateArgs),
    /// Run a parameter-recovery study.
    Study(StudyArgs),
}

#[derive(Args)]
struct DataArgs {
    /// `from,to,value` edgelist (1-based node ids).
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Node count, if it cannot be inferred.
    #[arg(long)]
    nodes: Option<usize>,
    /// Node covariate CSV, one row per node.
    #[arg(long)]
    node_covariates: Option<PathBuf>,
    /// Dyadic covariate matrix, as NAME=PATH. Repeatable.
    #[arg(long = "dyad-covariate", value_name = "NAME=PATH")]
    dyad_covariates: Vec<String>,
}

impl DataArgs {
    fn apply(&self, d: &mut DataBlock) -> Result<()> {
        if let Some(p) = &self.edges {
            d.edges = Some(p.clone());
        }
        if let Some(n) = self.nodes {
            d.nodes = Some(n);
        }
        if let Some(p) = &self.node_covariates {
            d.node_covariates = Some(p.clone());
        }
        for kv in &self.dyad_covariates {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--dyad-covariate expects NAME=PATH, got '{kv}'");
            };
            d.dyad_covariates.insert(k.trim().to_string(), PathBuf::from(v.trim()));
        }
        for p in d.edges.iter_mut().chain(d.node_covariates.iter_mut()).chain(d.dyad_covariates.values_mut()) {
            *p = std::path::absolute(&*p)?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Comma-separated terms, e.g. `sum,nonzero,edgecov(dist)`.
    #[arg(long, value_delimiter = ',')]
    terms: Vec<TermSpec>,
    #[arg(long, value_parser = parse_reference)]
    reference: Option<ReferenceMeasure>,
    /// Largest allowed edge value.
    #[arg(long)]
    cap: Option<u32>,
}

fn parse_reference(s: &str) -> Result<ReferenceMeasure, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown reference '{s}' (expected poisson or constant)"))
}

impl ModelArgs {
    fn apply(&self, m: &mut Option<ModelBlock>) -> Result<()> {
        if !self.terms.is_empty() {
            match m {
                Some(b) => b.terms = self.terms.clone(),
                None => {
                    *m = Some(ModelBlock {
                        terms: self.terms.clone(),
                        reference: ReferenceMeasure::Poisson,
                        cap: None,
                        covariates: Default::default(),
                    })
                }
            }
        }
        let Some(b) = m.as_mut() else {
            bail!("no model given; set model.terms or --terms");
        };
        if let Some(r) = self.reference {
            b.reference = r;
        }
        if self.cap.is_some() {
            b.cap = self.cap;
        }
        Ok(())
    }
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also write `summary.json` and `manifest.json` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WindowMode {
    Global,
    Edgewise,
    Coarsened,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StartArg {
    Cd,
    Mple,
    Zeros,
}

#[derive(Args)]
struct FitArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    method: Option<FitMethod>,
    /// Starting estimate for MCMLE.
    #[arg(long, value_enum)]
    seed_method: Option<StartArg>,
    /// Dyad sampling strategy for MPLE.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<SamplingStrategy>,
    /// Number of dyads in the MPLE subsample.
    #[arg(long)]
    m_edges: Option<usize>,
    /// Truncation of the per-edge conditional sums.
    #[arg(long, value_enum)]
    window: Option<WindowMode>,
    #[arg(long)]
    lambda_global: Option<f64>,
    #[arg(long)]
    lambda_edge: Option<f64>,
    /// Knot count for the coarsened window.
    #[arg(long)]
    knots: Option<usize>,
    /// CD steps per chain.
    #[arg(long)]
    steps: Option<u64>,
    /// CD proposals per step.
    #[arg(long)]
    multiplicity: Option<u64>,
    /// CD chains per round.
    #[arg(long)]
    chains: Option<usize>,
    /// MCMLE thinning interval.
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    /// MCMLE draws per iteration.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `estimate.json` and `manifest.json`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Exact MLE by enumeration (tiny capped models only).
    #[arg(long, hide = true)]
    oracle: bool,
}

fn parse_strategy(s: &str) -> Result<SamplingStrategy, String> {
    let key = s.to_ascii_lowercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(key))
        .map_err(|_| format!("unknown strategy '{s}' (expected uniform, tie_no_tie or flat_value)"))
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated coefficients, one per term.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Skip writing the retained graphs.
    #[arg(long)]
    no_samples: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn resolve_seed(given: Option<u64>) -> u64 {
    given.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<String> {
    let s = serde_json::to_string_pretty(v)? + "\n";
    print!("{s}");
    Ok(s)
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<u8> {
    let mut data = DataBlock::default();
    args.data.apply(&mut data)?;
    let n = data.node_count()?;
    let g = data.graph(n)?;
    let summary = summarize(&g);
    let text = print_json(&summary)?;
    if let Some(dir) = &args.out_dir {
        Manifest::new("summarize", None, &data).write(dir)?;
        std::fs::write(dir.join("summary.json"), text)?;
    }
    Ok(0)
}

fn apply_fit_flags(a: &FitArgs, cfg: &mut FitConfig) -> Result<()> {
    a.data.apply(&mut cfg.data)?;
    a.model.apply(&mut cfg.model)?;
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(s) = a.seed_method {
        cfg.seed_method = match s {
            StartArg::Cd => SeedMethod::Cd,
            StartArg::Mple => SeedMethod::Mple,
            StartArg::Zeros => SeedMethod::Zeros,
        };
    }
    if let Some(s) = a.strategy {
        cfg.mple.sample.strategy = s;
    }
    if a.m_edges.is_some() {
        cfg.mple.sample.m_edges = a.m_edges;
    }
    if let Some(mode) = a.window {
        let lambda_edge = a.lambda_edge.unwrap_or(DEFAULT_LAMBDA_EDGE);
        let keep_low = vec![0, 1];
        cfg.mple.window = match mode {
            WindowMode::Global => WindowSpec::GlobalTruncation { lambda_global: a.lambda_global.unwrap_or(DEFAULT_LAMBDA_GLOBAL) },
            WindowMode::Edgewise => WindowSpec::EdgewiseTruncation { lambda_edge, keep_low },
            WindowMode::Coarsened => WindowSpec::Coarsened { knots: a.knots.unwrap_or(16), lambda_edge, keep_low },
        };
    } else {
        match &mut cfg.mple.window {
            WindowSpec::GlobalTruncation { lambda_global } => {
                if let Some(l) = a.lambda_global {
                    *lambda_global = l;
                }
            }
            WindowSpec::EdgewiseTruncation { lambda_edge, .. } => {
                if let Some(l) = a.lambda_edge {
                    *lambda_edge = l;
                }
            }
            WindowSpec::Coarsened { knots, lambda_edge, .. } => {
                if let Some(l) = a.lambda_edge {
                    *lambda_edge = l;
                }
                if let Some(k) = a.knots {
                    *knots = k;
                }
            }
        }
    }
    if let Some(s) = a.steps {
        cfg.cd.steps = s;
    }
    if let Some(m) = a.multiplicity {
        cfg.cd.multiplicity = m;
    }
    if let Some(c) = a.chains {
        cfg.cd.n_chains = c;
    }
    if let Some(i) = a.interval {
        cfg.mcmle.interval = i;
    }
    if a.burnin.is_some() {
        cfg.mcmle.burnin = a.burnin;
    }
    if let Some(s) = a.samples {
        cfg.mcmle.n_samples = s;
    }
    if let Some(m) = a.max_iterations {
        cfg.mcmle.max_iterations = m;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<u8> {
    let mut cfg: FitConfig = config::load(a.config.as_deref())?;
    apply_fit_flags(a, &mut cfg)?;
    let seed = resolve_seed(cfg.seed);
    cfg.seed = Some(seed);
    cfg.mple.sample.seed = derive_seed(seed, 1);
    cfg.cd.seed = derive_seed(seed, 2);
    cfg.mcmle.seed = derive_seed(seed, 3);
    if let Some(w) = cfg.workers {
        cfg.mple.workers = w;
        cfg.cd.workers = w;
        cfg.mcmle.workers = w;
    }
    let n = cfg.data.node_count()?;
    let g = cfg.data.graph(n)?;
    let block = cfg.model.as_ref().context("no model given")?;
    let model = block.build_with(cfg.data.covariates(n)?, seed)?;

    Manifest::new("fit", Some(seed), &cfg).write(&a.out_dir)?;
    let est: Estimate = if a.oracle {
        MethodSpec::new(MethodKind::Oracle).fit(&g, &model, seed)?
    } else {
        match cfg.method {
            FitMethod::Mple => fit_mple(&g, &model, &cfg.mple)?,
            FitMethod::Cd => fit_cd(&g, &model, &cfg.cd)?,
            FitMethod::Mcmle => fit_pipeline(&g, &model, &cfg.seed_method, &cfg.cd, &cfg.mple, &cfg.mcmle)?,
        }
    };
    let text = print_json(&est)?;
    let path = a.out_dir.join("estimate.json");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    for w in &est.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    if est.converged {
        Ok(0)
    } else {
        eprintln!("warning: {} fit did not converge", est.method);
        Ok(NOT_CONVERGED)
    }
}

#[derive(serde::Serialize)]
struct StatDiagnostic {
    term: String,
    mean: f64,
    sd: f64,
    lag1_autocorrelation: Option<f64>,
    effective_sample_size: Option<f64>,
}

#[derive(serde::Serialize)]
struct SimulationReport {
    acceptance_rate: f64,
    statistics: Vec<StatDiagnostic>,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<u8> {
    let mut cfg: SimulateConfig = config::load(a.config.as_deref())?;
    a.data.apply(&mut cfg.data)?;
    a.model.apply(&mut cfg.model)?;
    if !a.theta.is_empty() {
        cfg.theta = a.theta.clone();
    }
    if let Some(i) = a.interval {
        cfg.interval = i;
    }
    if a.burnin.is_some() {
        cfg.burnin = a.burnin;
    }
    if let Some(s) = a.samples {
        cfg.n_samples = s;
    }
    if a.no_samples {
        cfg.save_samples = false;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    let seed = resolve_seed(cfg.seed);
    cfg.seed = Some(seed);

    let n = cfg.data.node_count()?;
    let start = match cfg.data.edges {
        Some(_) => cfg.data.graph(n)?,
        None => CountGraph::empty(n)?,
    };
    let model = cfg.model.as_ref().context("no model given")?.build_with(cfg.data.covariates(n)?, seed)?;
    let sampler = SamplerConfig {
        proposal: cfg.proposal,
        burnin: cfg.burnin.unwrap_or(16 * cfg.interval),
        interval: cfg.interval,
        n_samples: cfg.n_samples,
        seed,
    };
    let out = &a.out_dir;
    Manifest::new("simulate", Some(seed), &cfg).write(out)?;
    let sim = simulate(&model, &cfg.theta, &start, &sampler)?;

    let terms = model.term_names();
    let mut w = csv::Writer::from_path(out.join("stats.csv"))?;
    w.write_record(&terms)?;
    for row in &sim.stat_traces {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    if cfg.save_samples {
        let dir = out.join("samples");
        std::fs::create_dir_all(&dir)?;
        for (s, g) in sim.samples.iter().enumerate() {
            g.save(dir.join(format!("sample_{:05}.csv", s + 1)))?;
        }
    }
    if let Some(last) = sim.samples.last() {
        last.save(out.join("edges.csv"))?;
    }
    let diag = if sim.stat_traces.len() >= 10 { Some(mcmc_diagnostics(&sim.stat_traces)?) } else { None };
    let m = sim.stat_traces.len() as f64;
    let statistics = terms
        .into_iter()
        .enumerate()
        .map(|(t, term)| {
            let col: Vec<f64> = sim.stat_traces.iter().map(|r| r[t]).collect();
            let mean = col.iter().sum::<f64>() / m;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt();
            let d = diag.as_ref().map(|d| d[t].clone());
            StatDiagnostic {
                term,
                mean,
                sd,
                lag1_autocorrelation: d.as_ref().and_then(|d| d.lag1_autocorrelation),
                effective_sample_size: d.and_then(|d| d.effective_sample_size),
            }
        })
        .collect();
    let report = SimulationReport { acceptance_rate: sim.acceptance_rate, statistics };
    let text = print_json(&report)?;
    std::fs::write(out.join("diagnostics.json"), text)?;
    Ok(0)
}

fn load_study(path: &Path, seed_flag: Option<u64>) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = config::parse_json(path, &text)?;
    let has_seed = value.get("seed").is_some();
    if has_seed {
        return config::parse_json(path, &text);
    }
    let mut value = value;
    if let Some(obj) = value.as_object_mut() {
        obj.insert("seed".into(), resolve_seed(seed_flag).into());
    }
    serde_json::from_value(value).with_context(|| path.display().to_string())
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "NA".into()
    }
}

fn cmd_study(a: &StudyArgs) -> Result<u8> {
    let mut cfg = load_study(&a.config, a.seed)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Manifest::new("study", Some(cfg.seed), &cfg).write(&a.out_dir)?;
    let result = run_recovery_study(&cfg)?;
    write_study_outputs(&a.out_dir, &result)?;

    println!(
        "{:<14} {:<20} {:>9} {:>9} {:>9} {:>11} {:>9} {:>9} {:>8}",
        "method", "coefficient", "arb", "se", "rmse", "calibration", "coverage", "seconds", "failures"
    );
    for r in &result.report.rows {
        println!(
            "{:<14} {:<20} {:>9} {:>9} {:>9} {:>11} {:>9} {:>9.3} {:>8}",
            r.method,
            r.coefficient,
            fmt_num(r.arb),
            fmt_num(r.se),
            fmt_num(r.rmse),
            fmt_num(r.calibration),
            fmt_num(r.coverage),
            r.mean_seconds,
            r.failures
        );
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Summarize(a) => cmd_summarize(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Study(a) => cmd_study(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
