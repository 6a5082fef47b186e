//! JSON run configurations and their loading rules.
//!
//! Precedence: command-line flags, then the config file, then built-in defaults.
//! Relative paths inside a config file are resolved against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vergm::graph::{load_covariates, load_graph};
use vergm::study::ModelBlock;
use vergm::{CdConfig, CountGraph, CovariateSet, McmleConfig, MpleOptions, ProposalKind, SeedMethod};

/// Input files. Node ids in edgelists are 1-based.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataBlock {
    /// `from,to,value` edgelist.
    pub edges: Option<PathBuf>,
    /// Node count; inferred from the node covariates or the edgelist when absent.
    pub nodes: Option<usize>,
    /// CSV with a header of covariate names and one row per node.
    pub node_covariates: Option<PathBuf>,
    /// Headerless `n x n` matrices keyed by covariate name.
    pub dyad_covariates: BTreeMap<String, PathBuf>,
}

impl DataBlock {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.edges.as_mut().map(join);
        self.node_covariates.as_mut().map(join);
        self.dyad_covariates.values_mut().for_each(join);
    }

    pub fn node_count(&self) -> Result<usize> {
        if let Some(n) = self.nodes {
            return Ok(n);
        }
        if let Some(p) = &self.node_covariates {
            let mut rdr = csv::Reader::from_path(p).with_context(|| p.display().to_string())?;
            return Ok(rdr.records().count());
        }
        if let Some(p) = &self.edges {
            let mut rdr = csv::Reader::from_path(p).with_context(|| p.display().to_string())?;
            let mut n = 0;
            for rec in rdr.records() {
                let rec = rec.with_context(|| p.display().to_string())?;
                for f in rec.iter().take(2) {
                    n = n.max(f.trim().parse::<usize>().unwrap_or(0));
                }
            }
            if n > 0 {
                return Ok(n);
            }
        }
        bail!("cannot determine the node count; set data.nodes or --nodes")
    }

    pub fn covariates(&self, n: usize) -> Result<CovariateSet> {
        let dyads: Vec<(String, &PathBuf)> = self.dyad_covariates.iter().map(|(k, v)| (k.clone(), v)).collect();
        Ok(load_covariates(self.node_covariates.as_ref(), &dyads, n)?)
    }

    pub fn graph(&self, n: usize) -> Result<CountGraph> {
        match &self.edges {
            Some(p) => Ok(load_graph(p, n)?),
            None => bail!("no edgelist given; set data.edges or --edges"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    #[default]
    Mple,
    Cd,
    Mcmle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub model: Option<ModelBlock>,
    #[serde(default)]
    pub method: FitMethod,
    /// Starting point for MCMLE.
    #[serde(default = "default_seed_method")]
    pub seed_method: SeedMethod,
    #[serde(default)]
    pub mple: MpleOptions,
    #[serde(default)]
    pub cd: CdConfig,
    #[serde(default)]
    pub mcmle: McmleConfig,
    /// Master seed; every stage seed is derived from it.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_seed_method() -> SeedMethod {
    SeedMethod::Mple
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: DataBlock::default(),
            model: None,
            method: FitMethod::default(),
            seed_method: default_seed_method(),
            mple: MpleOptions::default(),
            cd: CdConfig::default(),
            mcmle: McmleConfig::default(),
            seed: None,
            workers: None,
        }
    }
}

fn default_interval() -> u64 {
    1024
}

fn default_samples() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// `edges` is the starting graph; the empty graph is used without one.
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub model: Option<ModelBlock>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default = "default_interval")]
    pub interval: u64,
    /// Defaults to 16 intervals.
    #[serde(default)]
    pub burnin: Option<u64>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub proposal: ProposalKind,
    /// Write every retained graph as an edgelist.
    #[serde(default = "default_true")]
    pub save_samples: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            data: DataBlock::default(),
            model: None,
            theta: Vec::new(),
            interval: default_interval(),
            burnin: None,
            n_samples: default_samples(),
            proposal: ProposalKind::default(),
            save_samples: true,
            seed: None,
        }
    }
}

pub trait HasData {
    fn data_mut(&mut self) -> &mut DataBlock;
}

impl HasData for FitConfig {
    fn data_mut(&mut self) -> &mut DataBlock {
        &mut self.data
    }
}

impl HasData for SimulateConfig {
    fn data_mut(&mut self) -> &mut DataBlock {
        &mut self.data
    }
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
}

/// Reads a config file, resolving its relative data paths.
pub fn load<T: DeserializeOwned + Default + HasData>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: T = parse_json(path, &text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.data_mut().resolve(&base);
    Ok(cfg)
}

/// Record of a run, sufficient to repeat it.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub argv: Vec<String>,
    pub config: &'a C,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, seed: Option<u64>, config: &'a C) -> Self {
        Self {
            tool: "vergm",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            argv: std::env::args().collect(),
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse_json::<FitConfig>(Path::new("fit.json"), "{\n  \"methd\": \"cd\"\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("fit.json:2:"), "{msg}");
        assert!(msg.contains("unknown field"), "{msg}");
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut d = DataBlock { edges: Some("e.csv".into()), ..Default::default() };
        d.dyad_covariates.insert("dist".into(), "/abs/d.csv".into());
        d.resolve(Path::new("cfg"));
        assert_eq!(d.edges.unwrap(), Path::new("cfg/e.csv"));
        assert_eq!(d.dyad_covariates["dist"], Path::new("/abs/d.csv"));
    }

    #[test]
    fn fit_config_roundtrip() {
        let cfg = FitConfig { method: FitMethod::Mcmle, seed: Some(7), ..Default::default() };
        let s = serde_json::to_string(&cfg).unwrap();
        let back: FitConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
