//! Closed-form variational lower bound on log p(y) for the heteroscedastic
//! model `y_i ~ N(x_i^T beta, exp(z_i^T alpha))` under Gaussian factors.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::ModelData;
use crate::error::{Error, Result};
use crate::fit::{SolverConfig, VariationalFit};
use crate::linalg::{logdet_spd, quad_form, row_quad_forms};
use crate::prior::PriorSpec;

/// Prior cross-entropy (`t1`), expected log-likelihood (`t2`) and
/// variational entropy (`t3`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub total: f64,
}

/// Per-observation quantities shared by the bound and the coordinate updates.
#[derive(Debug, Clone)]
pub struct ObservationMoments {
    /// `y_i - x_i^T mu_beta`
    pub residual: DVector<f64>,
    /// `x_i^T Sigma_beta x_i`
    pub mean_var: DVector<f64>,
    /// `z_i^T mu_alpha - z_i^T Sigma_alpha z_i / 2`, clipped.
    pub log_scale: DVector<f64>,
    /// `z_i^T mu_alpha`
    pub z_mu: DVector<f64>,
}

impl ObservationMoments {
    pub fn new(data: &ModelData, fit: &VariationalFit, config: &SolverConfig) -> Self {
        let residual = &data.y - &data.x * &fit.mu_beta;
        let mean_var = row_quad_forms(&data.x, &fit.sigma_beta);
        let z_mu = &data.z * &fit.mu_alpha;
        let zsz = row_quad_forms(&data.z, &fit.sigma_alpha);
        let log_scale = DVector::from_iterator(
            data.n(),
            z_mu.iter().zip(zsz.iter()).map(|(m, s)| config.clip(m - 0.5 * s)),
        );
        Self { residual, mean_var, log_scale, z_mu }
    }

    /// `w_i = r_i^2 + x_i^T Sigma_beta x_i`
    pub fn w(&self) -> DVector<f64> {
        self.residual.zip_map(&self.mean_var, |r, s| r * r + s)
    }
}

pub(crate) fn check_dims(data: &ModelData, prior: &PriorSpec, fit: &VariationalFit) -> Result<()> {
    let (p, q) = (data.p(), data.q());
    let ok = prior.p() == p
        && prior.q() == q
        && fit.mu_beta.len() == p
        && fit.sigma_beta.shape() == (p, p)
        && fit.mu_alpha.len() == q
        && fit.sigma_alpha.shape() == (q, q);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "design is {p}+{q}, prior {}+{}, fit {}+{}",
            prior.p(),
            prior.q(),
            fit.mu_beta.len(),
            fit.mu_alpha.len()
        )))
    }
}

/// The three expectations making up the bound, evaluated in closed form.
pub fn elbo_terms(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    config: &SolverConfig,
) -> Result<ElboTerms> {
    check_dims(data, prior, fit)?;
    let (n, p, q) = (data.n() as f64, data.p() as f64, data.q() as f64);
    let ln2pi = (2.0 * PI).ln();

    let db = &fit.mu_beta - prior.mu_beta0();
    let da = &fit.mu_alpha - prior.mu_alpha0();
    let tr_b = (prior.precision_beta0() * &fit.sigma_beta).trace();
    let tr_a = (prior.precision_alpha0() * &fit.sigma_alpha).trace();
    let t1 = -0.5 * (p + q) * ln2pi
        - 0.5 * prior.logdet_beta0()
        - 0.5 * prior.logdet_alpha0()
        - 0.5 * tr_b
        - 0.5 * tr_a
        - 0.5 * quad_form(prior.precision_beta0(), &db)
        - 0.5 * quad_form(prior.precision_alpha0(), &da);

    let m = ObservationMoments::new(data, fit, config);
    let data_fit: f64 = m
        .w()
        .iter()
        .zip(m.log_scale.iter())
        .map(|(w, ls)| w * (-ls).exp())
        .sum();
    let t2 = -0.5 * n * ln2pi - 0.5 * m.z_mu.sum() - 0.5 * data_fit;

    let ld_b = logdet_spd(&fit.sigma_beta, config.jitter, "variational covariance of beta")?;
    let ld_a = logdet_spd(&fit.sigma_alpha, config.jitter, "variational covariance of alpha")?;
    let t3 = 0.5 * (p + q) * ln2pi + 0.5 * ld_b + 0.5 * ld_a + 0.5 * (p + q);

    Ok(ElboTerms { t1, t2, t3, total: t1 + t2 + t3 })
}

/// The lower bound itself, written in its collapsed form (the `log 2 pi`
/// contributions of the prior and entropy terms cancel).
pub fn elbo(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    config: &SolverConfig,
) -> Result<f64> {
    check_dims(data, prior, fit)?;
    let (n, p, q) = (data.n() as f64, data.p() as f64, data.q() as f64);
    let ld_b = logdet_spd(&fit.sigma_beta, config.jitter, "variational covariance of beta")?;
    let ld_a = logdet_spd(&fit.sigma_alpha, config.jitter, "variational covariance of alpha")?;
    let db = &fit.mu_beta - prior.mu_beta0();
    let da = &fit.mu_alpha - prior.mu_alpha0();
    let m = ObservationMoments::new(data, fit, config);
    let data_fit: f64 = m
        .w()
        .iter()
        .zip(m.log_scale.iter())
        .map(|(w, ls)| w * (-ls).exp())
        .sum();
    let value = 0.5 * (p + q) - 0.5 * n * (2.0 * PI).ln()
        + 0.5 * (ld_b - prior.logdet_beta0())
        + 0.5 * (ld_a - prior.logdet_alpha0())
        - 0.5 * (prior.precision_beta0() * &fit.sigma_beta).trace()
        - 0.5 * (prior.precision_alpha0() * &fit.sigma_alpha).trace()
        - 0.5 * quad_form(prior.precision_beta0(), &db)
        - 0.5 * quad_form(prior.precision_alpha0(), &da)
        - 0.5 * m.z_mu.sum()
        - 0.5 * data_fit;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidData("lower bound is not finite".into()))
    }
}
