//! Finite support windows for the per-edge conditional sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SupportSpec;

pub const DEFAULT_LAMBDA_GLOBAL: f64 = 4.0;
pub const DEFAULT_LAMBDA_EDGE: f64 = 1.0;

fn default_keep_low() -> Vec<u32> {
    vec![0, 1]
}

/// How the infinite sum over candidate edge values is truncated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    /// `{0, …, ⌈λ · max y⌉}` for every edge.
    GlobalTruncation { lambda_global: f64 },
    /// `keep_low ∪ {⌊y − 4λ√y⌋, …, ⌈y + 4λ√y⌉}` per edge.
    EdgewiseTruncation {
        lambda_edge: f64,
        #[serde(default = "default_keep_low")]
        keep_low: Vec<u32>,
    },
    /// Edgewise range approximated by a step function on `knots` evenly spaced values.
    /// Experimental.
    Coarsened {
        knots: usize,
        lambda_edge: f64,
        #[serde(default = "default_keep_low")]
        keep_low: Vec<u32>,
    },
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::GlobalTruncation { lambda_global: DEFAULT_LAMBDA_GLOBAL }
    }
}

impl WindowSpec {
    pub fn edgewise(lambda_edge: f64) -> Self {
        WindowSpec::EdgewiseTruncation { lambda_edge, keep_low: default_keep_low() }
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = match self {
            WindowSpec::GlobalTruncation { lambda_global } => *lambda_global,
            WindowSpec::EdgewiseTruncation { lambda_edge, .. } => *lambda_edge,
            WindowSpec::Coarsened { knots, lambda_edge, .. } => {
                if *knots < 2 {
                    return Err(Error::Domain(format!("coarsened windows need at least 2 knots, got {knots}")));
                }
                *lambda_edge
            }
        };
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("window multiplier must be positive, got {lambda}")));
        }
        Ok(())
    }
}

/// Candidate values with the log of the number of values each one stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub values: Vec<u32>,
    pub log_weights: Vec<f64>,
}

impl Window {
    fn unit(mut values: Vec<u32>) -> Self {
        values.sort_unstable();
        values.dedup();
        let log_weights = vec![0.0; values.len()];
        Self { values, log_weights }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of support values represented.
    pub fn represented(&self) -> f64 {
        self.log_weights.iter().map(|w| w.exp()).sum()
    }
}

fn edgewise_range(y: u32, lambda_edge: f64) -> (u32, u32) {
    let half = 4.0 * lambda_edge * (y as f64).sqrt();
    let lo = (y as f64 - half).floor().max(0.0) as u32;
    let hi = (y as f64 + half).ceil() as u32;
    (lo, hi)
}

/// Candidate values for an edge observed at `y` in a graph whose largest value is `y_max`.
///
/// The observed value is always present with weight 1 and nothing exceeds the support cap.
pub fn build_window(y: u32, support: SupportSpec, spec: &WindowSpec, y_max: u32) -> Window {
    let cap = support.cap.unwrap_or(u32::MAX);
    let clip = |v: u32| v.min(cap);
    match spec {
        WindowSpec::GlobalTruncation { lambda_global } => {
            let top = ((lambda_global * y_max as f64).ceil() as u32).max(1);
            let mut values: Vec<u32> = (0..=clip(top)).collect();
            if y > clip(top) {
                values.push(y);
            }
            Window::unit(values)
        }
        WindowSpec::EdgewiseTruncation { lambda_edge, keep_low } => {
            let (lo, hi) = edgewise_range(y, *lambda_edge);
            let mut values: Vec<u32> = (lo..=clip(hi)).collect();
            values.extend(keep_low.iter().copied().filter(|&v| v <= cap));
            Window::unit(values)
        }
        WindowSpec::Coarsened { knots, lambda_edge, keep_low } => {
            let (lo, hi) = edgewise_range(y, *lambda_edge);
            let hi = clip(hi);
            let span = (hi - lo) as f64;
            let mut pts: Vec<u32> = (0..*knots)
                .map(|a| lo + (span * a as f64 / (*knots - 1) as f64).round() as u32)
                .collect();
            // The observed value stands only for itself.
            pts.push(y);
            if y < hi {
                pts.push(y + 1);
            }
            pts.sort_unstable();
            pts.dedup();
            let mut values: Vec<u32> = keep_low.iter().copied().filter(|&v| v < lo && v <= cap).collect();
            values.sort_unstable();
            values.dedup();
            let mut log_weights = vec![0.0; values.len()];
            for (a, &v) in pts.iter().enumerate() {
                let gap = pts.get(a + 1).map_or(1, |next| next - v);
                values.push(v);
                log_weights.push((gap as f64).ln());
            }
            Window { values, log_weights }
        }
    }
}
