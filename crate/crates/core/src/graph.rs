//! Count-valued directed graphs, covariates and file ingestion.
//!
//! Node ids are 1-based in every file format and 0-based in memory.
//! Dyads not listed in an edgelist have value zero.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed network with non-negative integer edge values and no self-loops.
///
/// Values are stored densely in row-major order; the diagonal is always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CountGraph {
    n: usize,
    values: Vec<u32>,
}

impl CountGraph {
    /// The empty (all-zero) graph on `n` nodes.
    pub fn empty(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("a graph needs at least 2 nodes, got {n}")));
        }
        Ok(Self { n, values: vec![0; n * n] })
    }

    /// Builds a graph from a row-major `n * n` matrix. Diagonal entries must be zero.
    pub fn from_matrix(n: usize, values: Vec<u32>) -> Result<Self> {
        let mut g = Self::empty(n)?;
        if values.len() != n * n {
            return Err(Error::Domain(format!(
                "expected {} matrix entries for n={n}, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0 {
                return Err(Error::Domain(format!("self-loop at node {}", i + 1)));
            }
        }
        g.values = values;
        Ok(g)
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("adjacency rows must form a square matrix".into()));
        }
        Self::from_matrix(n, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of ordered dyads, `n(n-1)`.
    #[inline]
    pub fn n_dyads(&self) -> usize {
        self.n * (self.n - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.n + j]
    }

    /// Sets the value of edge `(i, j)`.
    ///
    /// # Panics
    /// Panics on `i == j` or out-of-range indices.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: u32) {
        assert!(i != j, "self-loops are not allowed");
        self.values[i * self.n + j] = value;
    }

    /// Returns a copy with edge `(i, j)` set to `value`.
    pub fn with_edge(&self, i: usize, j: usize, value: u32) -> Self {
        let mut g = self.clone();
        g.set(i, j, value);
        g
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// All ordered dyads in row-major order.
    pub fn dyads(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> + '_ {
        (0..self.n_dyads()).map(move |k| self.dyad_at(k))
    }

    /// Dyad at position `k` of [`CountGraph::dyads`].
    #[inline]
    pub fn dyad_at(&self, k: usize) -> (usize, usize) {
        let m = self.n - 1;
        let i = k / m;
        let r = k % m;
        (i, if r >= i { r + 1 } else { r })
    }

    #[inline]
    pub fn dyad_index(&self, i: usize, j: usize) -> usize {
        i * (self.n - 1) + if j > i { j - 1 } else { j }
    }

    pub fn max_value(&self) -> u32 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn out_sums(&self) -> Vec<u64> {
        (0..self.n)
            .map(|i| self.values[i * self.n..(i + 1) * self.n].iter().map(|&v| v as u64).sum())
            .collect()
    }

    pub fn in_sums(&self) -> Vec<u64> {
        let mut s = vec![0u64; self.n];
        for i in 0..self.n {
            for (j, acc) in s.iter_mut().enumerate() {
                *acc += self.values[i * self.n + j] as u64;
            }
        }
        s
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0).count()
    }

    /// Relabels nodes so that new node `perm[i]` is old node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let mut g = Self { n: self.n, values: vec![0; self.values.len()] };
        for (i, j) in self.dyads() {
            g.values[perm[i] * self.n + perm[j]] = self.get(i, j);
        }
        g
    }

    /// Writes the nonzero edges as a `from,to,value` CSV edgelist.
    pub fn write_edgelist<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["from", "to", "value"])?;
        for (i, j) in self.dyads() {
            let v = self.get(i, j);
            if v > 0 {
                wtr.write_record([(i + 1).to_string(), (j + 1).to_string(), v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())?;
        self.write_edgelist(f)
    }
}

impl fmt::Debug for CountGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CountGraph(n={})", self.n)?;
        for i in 0..self.n {
            writeln!(f, "  {:?}", &self.values[i * self.n..(i + 1) * self.n])?;
        }
        Ok(())
    }
}

/// Optional upper bound on edge values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSpec {
    pub cap: Option<u32>,
}

impl SupportSpec {
    pub const UNBOUNDED: SupportSpec = SupportSpec { cap: None };

    pub fn capped(cap: u32) -> Result<Self> {
        if cap == 0 {
            return Err(Error::Domain("support cap must be at least 1".into()));
        }
        Ok(Self { cap: Some(cap) })
    }

    #[inline]
    pub fn contains(&self, value: u32) -> bool {
        self.cap.is_none_or(|c| value <= c)
    }

    pub fn check_graph(&self, g: &CountGraph) -> Result<()> {
        match self.cap {
            Some(c) if g.max_value() > c => Err(Error::Domain(format!(
                "graph has edge value {} above the support cap {c}",
                g.max_value()
            ))),
            _ => Ok(()),
        }
    }
}

/// Node-level and dyad-level real covariates, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    n: usize,
    node: BTreeMap<String, Vec<f64>>,
    /// Row-major `n * n` matrices.
    dyad: BTreeMap<String, Vec<f64>>,
}

impl CovariateSet {
    pub fn new(n: usize) -> Self {
        Self { n, ..Default::default() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert_node(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n {
            return Err(Error::Ingest(format!(
                "node covariate '{name}' has {} values, expected {}",
                values.len(),
                self.n
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingest(format!("node covariate '{name}' is not finite at node {}", k + 1)));
        }
        self.node.insert(name, values);
        Ok(())
    }

    pub fn insert_dyad(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n * self.n {
            return Err(Error::Ingest(format!(
                "dyad covariate '{name}' has {} entries, expected {}x{}",
                values.len(),
                self.n,
                self.n
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingest(format!(
                "dyad covariate '{name}' is not finite at ({}, {})",
                k / self.n + 1,
                k % self.n + 1
            )));
        }
        self.dyad.insert(name, values);
        Ok(())
    }

    pub fn node(&self, name: &str) -> Option<&[f64]> {
        self.node.get(name).map(Vec::as_slice)
    }

    pub fn dyad(&self, name: &str) -> Option<&[f64]> {
        self.dyad.get(name).map(Vec::as_slice)
    }

    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.node.keys().map(String::as_str)
    }

    pub fn dyad_names(&self) -> impl Iterator<Item = &str> {
        self.dyad.keys().map(String::as_str)
    }

    /// Relabels nodes consistently with [`CountGraph::permuted`].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut out = Self::new(n);
        for (name, v) in &self.node {
            let mut w = vec![0.0; n];
            for i in 0..n {
                w[perm[i]] = v[i];
            }
            out.node.insert(name.clone(), w);
        }
        for (name, v) in &self.dyad {
            let mut w = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    w[perm[i] * n + perm[j]] = v[i * n + j];
                }
            }
            out.dyad.insert(name.clone(), w);
        }
        out
    }
}

fn ingest_err(line: u64, msg: impl fmt::Display) -> Error {
    Error::Ingest(format!("{msg} at line {line}"))
}

/// Reads a `from,to,value` edgelist for a graph on `n` nodes.
pub fn read_edgelist<R: Read>(reader: R, n: usize) -> Result<CountGraph> {
    let mut g = CountGraph::empty(n)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["from", "to", "value"] {
        return Err(ingest_err(1, format!("expected header 'from,to,value', found '{}'", cols.join(","))));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest_err(line, "malformed row")
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(ingest_err(line, "malformed row"));
        }
        let id = |k: usize| -> Result<usize> {
            let v: usize = rec[k].parse().map_err(|_| ingest_err(line, format!("bad node id '{}'", &rec[k])))?;
            if v == 0 || v > n {
                return Err(ingest_err(line, format!("node id {v} out of range 1..{n}")));
            }
            Ok(v - 1)
        };
        let (i, j) = (id(0)?, id(1)?);
        if i == j {
            return Err(ingest_err(line, "self-loop"));
        }
        let raw = &rec[2];
        let value: u32 = match raw.parse::<i64>() {
            Ok(v) if v < 0 => return Err(ingest_err(line, format!("negative value {v}"))),
            Ok(v) => u32::try_from(v).map_err(|_| ingest_err(line, format!("value {v} too large")))?,
            Err(_) => return Err(ingest_err(line, format!("value '{raw}' is not a non-negative integer"))),
        };
        g.set(i, j, value);
    }
    Ok(g)
}

/// Loads an edgelist file; see [`read_edgelist`].
pub fn load_graph(path: impl AsRef<Path>, n: usize) -> Result<CountGraph> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    read_edgelist(f, n).map_err(|e| e.in_file(path))
}

/// Parses a node covariate CSV (header row of names, one row per node in id order).
pub fn read_node_covariates<R: Read>(reader: R, n: usize, into: &mut CovariateSet) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); names.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest_err(e.position().map_or(0, |p| p.line()), "malformed row"))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(ingest_err(line, "malformed row"));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| ingest_err(line, format!("bad number '{field}'")))?;
            if !v.is_finite() {
                return Err(ingest_err(line, format!("non-finite value '{field}'")));
            }
            cols[c].push(v);
        }
    }
    for (name, col) in names.into_iter().zip(cols) {
        if col.len() != n {
            return Err(Error::Ingest(format!(
                "dimension mismatch: node covariate '{name}' has {} rows, expected {n}",
                col.len()
            )));
        }
        into.insert_node(name, col)?;
    }
    Ok(())
}

/// Parses a headerless `n x n` numeric matrix.
pub fn read_dyad_matrix<R: Read>(reader: R, n: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest_err(e.position().map_or(0, |p| p.line()), "malformed row"))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n {
            return Err(ingest_err(line, format!("dimension mismatch: {} columns, expected {n}", rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| ingest_err(line, format!("bad number '{field}'")))?;
            if !v.is_finite() {
                return Err(ingest_err(line, format!("non-finite value '{field}'")));
            }
            out.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Ingest(format!("dimension mismatch: {rows} rows, expected {n}")));
    }
    Ok(out)
}

/// Loads a node covariate CSV and any number of named dyad matrices.
pub fn load_covariates<P: AsRef<Path>>(
    node_csv: Option<P>,
    dyad_csvs: &[(String, P)],
    n: usize,
) -> Result<CovariateSet> {
    let mut set = CovariateSet::new(n);
    if let Some(p) = node_csv {
        let p = p.as_ref();
        let f = std::fs::File::open(p).map_err(|e| Error::Ingest(format!("{}: {e}", p.display())))?;
        read_node_covariates(f, n, &mut set).map_err(|e| e.in_file(p))?;
    }
    for (name, p) in dyad_csvs {
        let p = p.as_ref();
        let f = std::fs::File::open(p).map_err(|e| Error::Ingest(format!("{}: {e}", p.display())))?;
        let m = read_dyad_matrix(f, n).map_err(|e| e.in_file(p))?;
        set.insert_dyad(name.clone(), m)?;
    }
    Ok(set)
}

/// Descriptive statistics of the off-diagonal edge values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub max: u32,
    pub mean: f64,
    /// Sample standard deviation (divisor `n(n-1) - 1`).
    pub sd: f64,
    /// Proportion of dyads with a nonzero value.
    pub density: f64,
}

pub fn summarize(g: &CountGraph) -> GraphSummary {
    let vals: Vec<f64> = g.dyads().map(|(i, j)| g.get(i, j) as f64).collect();
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let ss: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum();
    GraphSummary {
        nodes: g.n(),
        max: g.max_value(),
        mean,
        sd: (ss / (m - 1.0)).sqrt(),
        density: g.nonzero_count() as f64 / m,
    }
}
