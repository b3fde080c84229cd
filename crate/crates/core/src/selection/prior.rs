use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::ModelIndex;
use crate::data::DesignData;
use crate::error::{Error, Result};

/// Prior over (mean model, variance model). Sizes count non-intercept columns only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPriorPolicy {
    /// Constant; contributes nothing to model comparisons.
    Uniform,
    /// Independent inclusions with a common probability per model part.
    Bernoulli { pi_mean: f64, pi_var: f64 },
    /// Independent inclusions with one probability per column (indexed like
    /// the design; entries for intercepts are ignored).
    PerPredictor { pi_mean: Vec<f64>, pi_var: Vec<f64> },
    /// Uniform over model size, then uniform within size.
    Ebic,
}

impl Default for ModelPriorPolicy {
    fn default() -> Self {
        Self::Ebic
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidData(format!("{name} must lie strictly between 0 and 1, got {p}")))
    }
}

impl ModelPriorPolicy {
    pub fn validate(&self, data: &DesignData) -> Result<()> {
        match self {
            Self::Uniform | Self::Ebic => Ok(()),
            Self::Bernoulli { pi_mean, pi_var } => {
                check_prob("pi_mean", *pi_mean)?;
                check_prob("pi_var", *pi_var)
            }
            Self::PerPredictor { pi_mean, pi_var } => {
                if pi_mean.len() != data.p() || pi_var.len() != data.q() {
                    return Err(Error::Dimension(format!(
                        "inclusion probabilities have lengths {}+{}, design has {}+{}",
                        pi_mean.len(),
                        pi_var.len(),
                        data.p(),
                        data.q()
                    )));
                }
                for (j, &p) in pi_mean.iter().enumerate() {
                    if Some(j) != data.intercept_mean {
                        check_prob(&format!("pi_mean[{j}]"), p)?;
                    }
                }
                for (j, &p) in pi_var.iter().enumerate() {
                    if Some(j) != data.intercept_var {
                        check_prob(&format!("pi_var[{j}]"), p)?;
                    }
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Bernoulli { .. } => "bernoulli",
            Self::PerPredictor { .. } => "per_predictor",
            Self::Ebic => "ebic",
        }
    }
}

/// `log C(n, k)` via log-gamma.
pub fn log_binomial(n: usize, k: usize) -> f64 {
    assert!(k <= n, "k = {k} exceeds n = {n}");
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn per_predictor_sum(active: &[usize], pi: &[f64], universe: usize, intercept: Option<usize>) -> f64 {
    (0..universe)
        .filter(|&j| Some(j) != intercept)
        .map(|j| if active.binary_search(&j).is_ok() { pi[j].ln() } else { (1.0 - pi[j]).ln() })
        .sum()
}

/// Log prior probability of the model, up to a constant shared by all models.
pub fn model_log_prior(index: &ModelIndex, policy: &ModelPriorPolicy) -> f64 {
    let (pc, qc) = (index.mean_universe(), index.var_universe());
    let (c, v) = (index.mean_predictors().len(), index.var_predictors().len());
    match policy {
        ModelPriorPolicy::Uniform => 0.0,
        ModelPriorPolicy::Bernoulli { pi_mean, pi_var } => {
            c as f64 * pi_mean.ln()
                + (pc - c) as f64 * (1.0 - pi_mean).ln()
                + v as f64 * pi_var.ln()
                + (qc - v) as f64 * (1.0 - pi_var).ln()
        }
        ModelPriorPolicy::PerPredictor { pi_mean, pi_var } => {
            per_predictor_sum(&index.mean, pi_mean, index.p, index.intercept_mean)
                + per_predictor_sum(&index.var, pi_var, index.q, index.intercept_var)
        }
        ModelPriorPolicy::Ebic => -log_binomial(pc, c) - log_binomial(qc, v),
    }
}
