//! Gaussian priors on the mean and variance coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, cholesky_jittered, symmetrize};

/// Isotropic form `N(0, sigma2 I)` for both blocks, optionally with
/// inverse-gamma `IG(a, b)` hyperpriors on the two variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicPrior {
    pub sigma2_beta: f64,
    pub sigma2_alpha: f64,
    pub shrink: bool,
    pub a: f64,
    pub b: f64,
}

impl IsotropicPrior {
    pub fn new(sigma2_beta: f64, sigma2_alpha: f64) -> Self {
        Self { sigma2_beta, sigma2_alpha, shrink: false, a: 0.01, b: 0.01 }
    }

    pub fn with_shrinkage(mut self, a: f64, b: f64) -> Self {
        self.shrink = true;
        self.a = a;
        self.b = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.sigma2_beta) || !ok(self.sigma2_alpha) {
            return Err(Error::InvalidData("prior variances must be positive".into()));
        }
        if self.shrink && (!ok(self.a) || !ok(self.b)) {
            return Err(Error::InvalidData("inverse-gamma a, b must be positive".into()));
        }
        Ok(())
    }

    /// log IG(sigma2_beta; a, b) + log IG(sigma2_alpha; a, b).
    pub fn log_hyperprior(&self) -> f64 {
        log_inverse_gamma(self.sigma2_beta, self.a, self.b)
            + log_inverse_gamma(self.sigma2_alpha, self.a, self.b)
    }
}

pub fn log_inverse_gamma(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    mu_beta0: DVector<f64>,
    sigma_beta0: DMatrix<f64>,
    mu_alpha0: DVector<f64>,
    sigma_alpha0: DMatrix<f64>,
    isotropic: Option<IsotropicPrior>,
    prec_beta0: DMatrix<f64>,
    prec_alpha0: DMatrix<f64>,
    logdet_beta0: f64,
    logdet_alpha0: f64,
}

impl PriorSpec {
    pub fn new(
        mu_beta0: DVector<f64>,
        sigma_beta0: DMatrix<f64>,
        mu_alpha0: DVector<f64>,
        sigma_alpha0: DMatrix<f64>,
    ) -> Result<Self> {
        if sigma_beta0.shape() != (mu_beta0.len(), mu_beta0.len())
            || sigma_alpha0.shape() != (mu_alpha0.len(), mu_alpha0.len())
        {
            return Err(Error::Dimension("prior mean and covariance sizes differ".into()));
        }
        let cb = cholesky_jittered(&sigma_beta0, 0.0, "prior covariance of beta")?;
        let ca = cholesky_jittered(&sigma_alpha0, 0.0, "prior covariance of alpha")?;
        Ok(Self {
            logdet_beta0: chol_logdet(&cb),
            logdet_alpha0: chol_logdet(&ca),
            prec_beta0: symmetrize(cb.inverse()),
            prec_alpha0: symmetrize(ca.inverse()),
            mu_beta0,
            sigma_beta0,
            mu_alpha0,
            sigma_alpha0,
            isotropic: None,
        })
    }

    /// `N(0, sigma2_beta I_p)` and `N(0, sigma2_alpha I_q)`.
    pub fn isotropic(p: usize, q: usize, iso: IsotropicPrior) -> Result<Self> {
        iso.validate()?;
        let (sb, sa) = (iso.sigma2_beta, iso.sigma2_alpha);
        Ok(Self {
            mu_beta0: DVector::zeros(p),
            sigma_beta0: DMatrix::identity(p, p) * sb,
            mu_alpha0: DVector::zeros(q),
            sigma_alpha0: DMatrix::identity(q, q) * sa,
            isotropic: Some(iso),
            prec_beta0: DMatrix::identity(p, p) / sb,
            prec_alpha0: DMatrix::identity(q, q) / sa,
            logdet_beta0: p as f64 * sb.ln(),
            logdet_alpha0: q as f64 * sa.ln(),
        })
    }

    /// Same structure with new isotropic variances (hyperparameter update).
    pub fn with_variances(&self, sigma2_beta: f64, sigma2_alpha: f64) -> Result<Self> {
        let iso = self.isotropic.ok_or_else(|| {
            Error::Contract("variance update needs an isotropic prior".into())
        })?;
        Self::isotropic(
            self.p(),
            self.q(),
            IsotropicPrior { sigma2_beta, sigma2_alpha, ..iso },
        )
    }

    /// Marginal prior of the coefficient subsets `mean`, `var`.
    pub fn restricted(&self, mean: &[usize], var: &[usize]) -> Result<Self> {
        if let Some(iso) = self.isotropic {
            return Self::isotropic(mean.len(), var.len(), iso);
        }
        let sub = |m: &DMatrix<f64>, idx: &[usize]| {
            DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
        };
        let subv = |v: &DVector<f64>, idx: &[usize]| {
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
        };
        Self::new(
            subv(&self.mu_beta0, mean),
            sub(&self.sigma_beta0, mean),
            subv(&self.mu_alpha0, var),
            sub(&self.sigma_alpha0, var),
        )
    }

    pub fn p(&self) -> usize {
        self.mu_beta0.len()
    }
    pub fn q(&self) -> usize {
        self.mu_alpha0.len()
    }
    pub fn mu_beta0(&self) -> &DVector<f64> {
        &self.mu_beta0
    }
    pub fn sigma_beta0(&self) -> &DMatrix<f64> {
        &self.sigma_beta0
    }
    pub fn mu_alpha0(&self) -> &DVector<f64> {
        &self.mu_alpha0
    }
    pub fn sigma_alpha0(&self) -> &DMatrix<f64> {
        &self.sigma_alpha0
    }
    pub fn precision_beta0(&self) -> &DMatrix<f64> {
        &self.prec_beta0
    }
    pub fn precision_alpha0(&self) -> &DMatrix<f64> {
        &self.prec_alpha0
    }
    pub fn logdet_beta0(&self) -> f64 {
        self.logdet_beta0
    }
    pub fn logdet_alpha0(&self) -> f64 {
        self.logdet_alpha0
    }
    pub fn isotropic_params(&self) -> Option<&IsotropicPrior> {
        self.isotropic.as_ref()
    }
    pub fn shrink_enabled(&self) -> bool {
        self.isotropic.is_some_and(|i| i.shrink)
    }
}
