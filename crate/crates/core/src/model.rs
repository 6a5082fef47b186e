//! Sufficient-statistic terms, generalized change scores and reference measures.
//!
//! A [`ModelSpec`] is validated once at construction: covariate names are
//! resolved and the term list is checked, so the hot paths (change scores
//! inside samplers and pseudo-likelihood caches) never fail.
//!
//! The mutuality statistic sums `min(y_ij, y_ji)` over *unordered* pairs,
//! each reciprocal pair counted once.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CountGraph, CovariateSet, SupportSpec};

/// One sufficient statistic.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TermSpec {
    /// Total edge value.
    Sum,
    /// Number of dyads with a nonzero value.
    Nonzero,
    /// Edge values weighted by a covariate of the sending node.
    NodeOCov(String),
    /// Edge values weighted by a covariate of the receiving node.
    NodeICov(String),
    /// Edge values weighted by a dyadic covariate.
    EdgeCov(String),
    /// Sum over unordered pairs of `min(y_ij, y_ji)`.
    MutualMin,
    /// Sum over nodes of `min(in-strength, out-strength)`.
    MixedTwoStarMin,
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermSpec::Sum => f.write_str("sum"),
            TermSpec::Nonzero => f.write_str("nonzero"),
            TermSpec::NodeOCov(c) => write!(f, "nodeocov({c})"),
            TermSpec::NodeICov(c) => write!(f, "nodeicov({c})"),
            TermSpec::EdgeCov(c) => write!(f, "edgecov({c})"),
            TermSpec::MutualMin => f.write_str("mutual"),
            TermSpec::MixedTwoStarMin => f.write_str("mixed2star"),
        }
    }
}

impl FromStr for TermSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.find('(') {
            Some(p) if s.ends_with(')') => (s[..p].trim(), Some(s[p + 1..s.len() - 1].trim())),
            Some(_) => return Err(Error::Model(format!("malformed term '{s}'"))),
            None => (s, None),
        };
        let need = |arg: Option<&str>| -> Result<String> {
            match arg {
                Some(a) if !a.is_empty() => Ok(a.to_string()),
                _ => Err(Error::Model(format!("term '{head}' needs a covariate name"))),
            }
        };
        let t = match head.to_ascii_lowercase().as_str() {
            "sum" if arg.is_none() => TermSpec::Sum,
            "nonzero" if arg.is_none() => TermSpec::Nonzero,
            "nodeocov" => TermSpec::NodeOCov(need(arg)?),
            "nodeicov" => TermSpec::NodeICov(need(arg)?),
            "edgecov" => TermSpec::EdgeCov(need(arg)?),
            "mutual" if matches!(arg, None | Some("min")) => TermSpec::MutualMin,
            "mixed2star" | "mixedtwostar" if matches!(arg, None | Some("min")) => TermSpec::MixedTwoStarMin,
            _ => return Err(Error::Model(format!("unknown term '{s}'"))),
        };
        Ok(t)
    }
}

impl TryFrom<String> for TermSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TermSpec> for String {
    fn from(t: TermSpec) -> String {
        t.to_string()
    }
}

impl TermSpec {
    /// Whether the term's change score depends on edges other than the toggled one.
    pub fn is_dependence(&self) -> bool {
        matches!(self, TermSpec::MutualMin | TermSpec::MixedTwoStarMin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMeasure {
    /// `h(y) = prod 1/y_ij!`, a Poisson baseline.
    Poisson,
    /// `h(y) = 1` on a finite support.
    #[serde(alias = "constant")]
    ConstantCapped,
}

#[derive(Clone, Debug)]
enum Term {
    Sum,
    Nonzero,
    NodeOCov(Vec<f64>),
    NodeICov(Vec<f64>),
    EdgeCov(Vec<f64>),
    MutualMin,
    MixedTwoStarMin,
}

/// Validated model definition: ordered terms, reference measure and support.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    terms: Vec<TermSpec>,
    reference: ReferenceMeasure,
    support: SupportSpec,
    covariates: CovariateSet,
    resolved: Vec<Term>,
}

impl ModelSpec {
    pub fn new(
        terms: Vec<TermSpec>,
        reference: ReferenceMeasure,
        support: SupportSpec,
        covariates: CovariateSet,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Model("the term list is empty".into()));
        }
        for (a, t) in terms.iter().enumerate() {
            if terms[..a].contains(t) {
                return Err(Error::Model(format!("duplicate term '{t}'")));
            }
        }
        if reference == ReferenceMeasure::ConstantCapped && support.cap.is_none() {
            return Err(Error::Model("a constant reference measure requires a finite support cap".into()));
        }
        if support.cap == Some(0) {
            return Err(Error::Model("support cap must be at least 1".into()));
        }
        let node = |c: &str| {
            covariates
                .node(c)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Model(format!("unresolved covariate '{c}'")))
        };
        let resolved = terms
            .iter()
            .map(|t| {
                Ok(match t {
                    TermSpec::Sum => Term::Sum,
                    TermSpec::Nonzero => Term::Nonzero,
                    TermSpec::NodeOCov(c) => Term::NodeOCov(node(c)?),
                    TermSpec::NodeICov(c) => Term::NodeICov(node(c)?),
                    TermSpec::EdgeCov(c) => Term::EdgeCov(
                        covariates
                            .dyad(c)
                            .map(<[f64]>::to_vec)
                            .ok_or_else(|| Error::Model(format!("unresolved covariate '{c}'")))?,
                    ),
                    TermSpec::MutualMin => Term::MutualMin,
                    TermSpec::MixedTwoStarMin => Term::MixedTwoStarMin,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms, reference, support, covariates, resolved })
    }

    /// A covariate-free model with Poisson reference and unbounded support.
    pub fn poisson(terms: Vec<TermSpec>) -> Result<Self> {
        Self::new(terms, ReferenceMeasure::Poisson, SupportSpec::UNBOUNDED, CovariateSet::new(0))
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(ToString::to_string).collect()
    }

    /// Coefficient dimension.
    pub fn k(&self) -> usize {
        self.terms.len()
    }

    pub fn reference(&self) -> ReferenceMeasure {
        self.reference
    }

    pub fn support(&self) -> SupportSpec {
        self.support
    }

    pub fn covariates(&self) -> &CovariateSet {
        &self.covariates
    }

    pub fn with_support(&self, support: SupportSpec) -> Result<Self> {
        Self::new(self.terms.clone(), self.reference, support, self.covariates.clone())
    }

    /// Whether change scores need node strengths (in/out sums).
    pub fn needs_margins(&self) -> bool {
        self.resolved.iter().any(|t| matches!(t, Term::MixedTwoStarMin))
    }

    /// Checks that a graph is dimensionally consistent with the model and inside its support.
    pub fn check_graph(&self, g: &CountGraph) -> Result<()> {
        let uses_covs = self
            .terms
            .iter()
            .any(|t| matches!(t, TermSpec::NodeOCov(_) | TermSpec::NodeICov(_) | TermSpec::EdgeCov(_)));
        if uses_covs && self.covariates.n() != g.n() {
            return Err(Error::Model(format!(
                "covariates are defined for {} nodes but the graph has {}",
                self.covariates.n(),
                g.n()
            )));
        }
        self.support.check_graph(g)
    }

    /// Sufficient statistics `g(y, X)`.
    pub fn suff_stats(&self, g: &CountGraph) -> Vec<f64> {
        let n = g.n();
        let mut out = vec![0.0; self.k()];
        for (slot, term) in out.iter_mut().zip(&self.resolved) {
            *slot = match term {
                Term::Sum => g.values().iter().map(|&v| v as f64).sum(),
                Term::Nonzero => g.nonzero_count() as f64,
                Term::NodeOCov(c) => g.dyads().map(|(i, j)| g.get(i, j) as f64 * c[i]).sum(),
                Term::NodeICov(c) => g.dyads().map(|(i, j)| g.get(i, j) as f64 * c[j]).sum(),
                Term::EdgeCov(c) => g.dyads().map(|(i, j)| g.get(i, j) as f64 * c[i * n + j]).sum(),
                Term::MutualMin => {
                    let mut s = 0u64;
                    for i in 0..n {
                        for j in i + 1..n {
                            s += g.get(i, j).min(g.get(j, i)) as u64;
                        }
                    }
                    s as f64
                }
                Term::MixedTwoStarMin => {
                    let (out, inn) = (g.out_sums(), g.in_sums());
                    out.iter().zip(&inn).map(|(&o, &i)| o.min(i)).sum::<u64>() as f64
                }
            };
        }
        out
    }

    /// Generalized change score `g(l ∪ y^c_ij) - g(y)` for edge `(i, j)`.
    pub fn change_score(&self, g: &CountGraph, i: usize, j: usize, l: u32) -> Result<Vec<f64>> {
        if i == j {
            return Err(Error::Domain(format!("change score requested for self-loop ({}, {})", i + 1, j + 1)));
        }
        if i >= g.n() || j >= g.n() {
            return Err(Error::Domain(format!("dyad ({}, {}) outside a {}-node graph", i + 1, j + 1, g.n())));
        }
        let mut out = vec![0.0; self.k()];
        let margins = self.needs_margins().then(|| Margins::of_nodes(g, i, j));
        self.change_score_into(g, margins.as_ref(), i, j, l, &mut out);
        Ok(out)
    }

    /// Writes the change score into `out`. `margins` must be supplied when
    /// [`ModelSpec::needs_margins`] is true; only entries for `i` and `j` are read.
    pub(crate) fn change_score_into(
        &self,
        g: &CountGraph,
        margins: Option<&Margins>,
        i: usize,
        j: usize,
        l: u32,
        out: &mut [f64],
    ) {
        let y = g.get(i, j);
        let d = l as f64 - y as f64;
        let n = g.n();
        for (slot, term) in out.iter_mut().zip(&self.resolved) {
            *slot = match term {
                Term::Sum => d,
                Term::Nonzero => ((l > 0) as i32 - (y > 0) as i32) as f64,
                Term::NodeOCov(c) => d * c[i],
                Term::NodeICov(c) => d * c[j],
                Term::EdgeCov(c) => d * c[i * n + j],
                Term::MutualMin => {
                    let r = g.get(j, i);
                    (l.min(r) as i64 - y.min(r) as i64) as f64
                }
                Term::MixedTwoStarMin => {
                    let m = margins.expect("margins required for mixed 2-star change scores");
                    let dl = l as i64 - y as i64;
                    let (oi, ii) = (m.out[i] as i64, m.inn[i] as i64);
                    let (oj, ij) = (m.out[j] as i64, m.inn[j] as i64);
                    // Edge i->j feeds out-strength of i and in-strength of j.
                    let di = (oi + dl).min(ii) - oi.min(ii);
                    let dj = oj.min(ij + dl) - oj.min(ij);
                    (di + dj) as f64
                }
            };
        }
    }

    /// `ln h(y)`: `-sum ln(y_ij!)` for the Poisson reference, 0 otherwise.
    pub fn log_reference(&self, g: &CountGraph) -> f64 {
        match self.reference {
            ReferenceMeasure::Poisson => -g.values().iter().map(|&v| ln_factorial(v)).sum::<f64>(),
            ReferenceMeasure::ConstantCapped => 0.0,
        }
    }

    /// Unnormalized log-probability `θᵀg(y, X) + ln h(y)`.
    pub fn log_potential(&self, g: &CountGraph, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.k(), "coefficient dimension mismatch");
        dot(theta, &self.suff_stats(g)) + self.log_reference(g)
    }
}

/// In- and out-strengths of every node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Margins {
    pub out: Vec<u64>,
    pub inn: Vec<u64>,
}

impl Margins {
    pub fn of(g: &CountGraph) -> Self {
        Self { out: g.out_sums(), inn: g.in_sums() }
    }

    /// Strengths for nodes `a` and `b` only; other entries are zero.
    fn of_nodes(g: &CountGraph, a: usize, b: usize) -> Self {
        let n = g.n();
        let mut m = Self { out: vec![0; n], inn: vec![0; n] };
        for v in [a, b] {
            m.out[v] = (0..n).map(|k| g.get(v, k) as u64).sum();
            m.inn[v] = (0..n).map(|k| g.get(k, v) as u64).sum();
        }
        m
    }

    /// Records that edge `(i, j)` changed from `old` to `new`.
    #[inline]
    pub fn update(&mut self, i: usize, j: usize, old: u32, new: u32) {
        self.out[i] = self.out[i] + new as u64 - old as u64;
        self.inn[j] = self.inn[j] + new as u64 - old as u64;
    }
}

const LN_FACT_TABLE: usize = 1 << 15;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..LN_FACT_TABLE).map(|k| statrs::function::gamma::ln_gamma(k as f64 + 1.0)).collect())
}

/// `ln(k!)` via log-gamma, memoized for small `k`.
#[inline]
pub fn ln_factorial(k: u32) -> f64 {
    match k {
        0 | 1 => 0.0,
        _ if (k as usize) < LN_FACT_TABLE => ln_fact_table()[k as usize],
        _ => statrs::function::gamma::ln_gamma(k as f64 + 1.0),
    }
}

/// `ln h(l ∪ y^c) - ln h(y)` for an edge changing from `y` to `l`.
#[inline]
pub fn log_reference_ratio(y: u32, l: u32, reference: ReferenceMeasure) -> f64 {
    match reference {
        ReferenceMeasure::Poisson => ln_factorial(y) - ln_factorial(l),
        ReferenceMeasure::ConstantCapped => 0.0,
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
