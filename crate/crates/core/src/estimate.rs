//! Estimator output shared by every fitting method.

use serde::{Deserialize, Serialize};

/// Point estimates, standard errors and run diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Method label, e.g. `mple`, `cd`, `mcmle`, `cd-mcmle`, `mple-mcmle`.
    pub method: String,
    pub terms: Vec<String>,
    pub theta: Vec<f64>,
    /// Estimated standard errors; `null` in JSON when undefined.
    #[serde(with = "nan_as_null")]
    pub se: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub wallclock_seconds: f64,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl Estimate {
    /// Converged with finite, positive standard errors.
    pub fn is_usable(&self) -> bool {
        self.converged
            && self.theta.iter().all(|t| t.is_finite())
            && self.se.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Final objective value (log pseudo-likelihood for MPLE).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_max_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges_used: Option<usize>,
    /// Per-iteration step lengths (MCMLE).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_lengths: Vec<f64>,
    /// Per-iteration maximum absolute t-ratio of observed vs simulated statistics (MCMLE).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub max_t_ratios: Vec<f64>,
    /// Full reruns with a fresh seed after non-convergence.
    #[serde(default)]
    pub reruns: usize,
    /// Simulations discarded for importance-weight degeneracy.
    #[serde(default)]
    pub degenerate_restarts: usize,
    /// Seed estimate for staged pipelines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_estimate: Option<Box<Estimate>>,
}

pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_with_undefined_se() {
        let e = Estimate {
            method: "cd".into(),
            terms: vec!["sum".into(), "mutual".into()],
            theta: vec![0.25, -1.5],
            se: vec![0.1, f64::NAN],
            converged: false,
            iterations: 3,
            wallclock_seconds: 0.5,
            diagnostics: Diagnostics::default(),
        };
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"se\":[0.1,null]"));
        let back: Estimate = serde_json::from_str(&s).unwrap();
        assert_eq!(back.theta, e.theta);
        assert!(back.se[1].is_nan());
        assert!(!back.is_usable());
    }
}
