use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::PriorSpec;

/// Gaussian factors `q(beta) = N(mu_beta, sigma_beta)` and
/// `q(alpha) = N(mu_alpha, sigma_alpha)` together with the bound they attain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalFit {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub mu_alpha: DVector<f64>,
    pub sigma_alpha: DMatrix<f64>,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl VariationalFit {
    /// Factors equal to the prior. Useful as a reference point: the bound then
    /// reduces to the expected log-likelihood under the prior.
    pub fn from_prior(prior: &PriorSpec) -> Self {
        Self {
            mu_beta: prior.mu_beta0().clone(),
            sigma_beta: prior.sigma_beta0().clone(),
            mu_alpha: prior.mu_alpha0().clone(),
            sigma_alpha: prior.sigma_alpha0().clone(),
            elbo: f64::NAN,
            iterations: 0,
            converged: false,
        }
    }

    pub fn p(&self) -> usize {
        self.mu_beta.len()
    }

    pub fn q(&self) -> usize {
        self.mu_alpha.len()
    }

    pub fn sd_beta(&self) -> Vec<f64> {
        self.sigma_beta.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    pub fn sd_alpha(&self) -> Vec<f64> {
        self.sigma_alpha.diagonal().iter().map(|v| v.sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when one sweep raises the bound by less than this.
    pub elbo_tol: f64,
    pub max_outer_iters: usize,
    /// Max-norm of the gradient at which the Newton mode search stops.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Cap on `|z^T mu - z^T Sigma z / 2|` before exponentiation.
    pub exponent_clip: f64,
    /// Relative diagonal jitter for a single Cholesky retry.
    pub jitter: f64,
    /// Scalar variance fast path; requires an all-ones variance design.
    pub homoscedastic: bool,
    /// Newton polish of the closed-form scalar variance mode.
    pub homoscedastic_polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            elbo_tol: 1e-6,
            max_outer_iters: 200,
            newton_tol: 1e-10,
            newton_max_iters: 100,
            exponent_clip: 30.0,
            jitter: 1e-10,
            homoscedastic: false,
            homoscedastic_polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.elbo_tol) || !pos(self.newton_tol) || !pos(self.exponent_clip) {
            return Err(Error::InvalidData("tolerances and exponent clip must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.newton_max_iters == 0 {
            return Err(Error::InvalidData("iteration limits must be positive".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidData("jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn clip(&self, e: f64) -> f64 {
        e.clamp(-self.exponent_clip, self.exponent_clip)
    }
}
