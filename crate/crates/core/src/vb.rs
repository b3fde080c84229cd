//! Coordinate ascent on the lower bound: exact Gaussian updates for the mean
//! factor, a gamma-GLM Laplace step for the variance factor, and optional
//! inverse-gamma shrinkage of the two prior variances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bound::{elbo, ObservationMoments};
use crate::data::ModelData;
use crate::error::{Error, Result};
use crate::fit::{SolverConfig, VariationalFit};
use crate::homoscedastic;
use crate::linalg::{cholesky_jittered, least_squares, symmetrize};
use crate::prior::PriorSpec;

const W_FLOOR: f64 = 1e-300;
const RESIDUAL_FLOOR: f64 = 1e-10;
const INIT_RIDGE_PER_OBS: f64 = 1e-6;

/// Gamma-GLM responses `w_i` and their scaled version `v_i = w_i / exp(z_i^T mu - z_i^T Sigma z_i / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoResponses {
    pub w: DVector<f64>,
    pub v: DVector<f64>,
}

impl PseudoResponses {
    pub fn new(data: &ModelData, fit: &VariationalFit, config: &SolverConfig) -> Self {
        let m = ObservationMoments::new(data, fit, config);
        let w = m.w().map(|v| v.max(W_FLOOR));
        let v = w.zip_map(&m.log_scale, |w, ls| w * (-ls).exp());
        Self { w, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonInfo {
    pub iterations: usize,
    /// Max-norm of the gradient at the returned point.
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitTrace {
    pub initial_elbo: f64,
    /// Bound after each sweep. With shrinkage enabled this is the penalized
    /// objective `elbo + log IG(sigma2_beta) + log IG(sigma2_alpha)`.
    pub elbo_per_iteration: Vec<f64>,
    pub alpha_update_accepted: Vec<bool>,
    pub newton: Vec<NewtonInfo>,
    pub hyper_values: Option<Vec<(f64, f64)>>,
}

impl FitTrace {
    pub fn is_monotone(&self) -> bool {
        let mut prev = self.initial_elbo;
        self.elbo_per_iteration.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }
}

fn diag_weights(log_scale: &DVector<f64>) -> DVector<f64> {
    log_scale.map(|ls| (-ls).exp())
}

/// `X^T diag(d) X`
fn weighted_gram(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut xd = x.clone();
    for (i, di) in d.iter().enumerate() {
        xd.row_mut(i).scale_mut(*di);
    }
    symmetrize(x.transpose() * xd)
}

/// Starting point: least squares for the mean, least squares of the log squared
/// residuals for the variance, each with a small ridge fallback.
pub fn init_fit(data: &ModelData, prior: &PriorSpec, config: &SolverConfig) -> Result<VariationalFit> {
    let n = data.n();
    let ridge = INIT_RIDGE_PER_OBS * (n.max(1) as f64);
    let (mu_beta, _) = least_squares(&data.x, &data.y, ridge);
    let resid = &data.y - &data.x * &mu_beta;
    let log_r2 = resid.map(|r| (r * r).max(RESIDUAL_FLOOR).ln());
    let (mu_alpha, zinv) = least_squares(&data.z, &log_r2, ridge);
    let q = data.q();
    let dof = n.saturating_sub(q).max(1) as f64;
    let rss = (&log_r2 - &data.z * &mu_alpha).norm_squared();
    let s2 = (rss / dof).max(1e-8);
    let mut fit = VariationalFit {
        mu_beta,
        sigma_beta: DMatrix::identity(data.p(), data.p()),
        mu_alpha,
        sigma_alpha: symmetrize(zinv * s2),
        elbo: f64::NAN,
        iterations: 0,
        converged: false,
    };
    if cholesky_jittered(&fit.sigma_alpha, config.jitter, "initial alpha covariance").is_err() {
        fit.sigma_alpha = prior.sigma_alpha0().clone();
    }
    let m = ObservationMoments::new(data, &fit, config);
    let prec = weighted_gram(&data.x, &diag_weights(&m.log_scale)) + prior.precision_beta0();
    fit.sigma_beta = symmetrize(cholesky_jittered(&prec, config.jitter, "beta precision")?.inverse());
    Ok(fit)
}

/// Exact maximizer of the bound in `(mu_beta, Sigma_beta)` with the variance factor held fixed.
pub fn update_beta(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    config: &SolverConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    crate::bound::check_dims(data, prior, fit)?;
    let m = ObservationMoments::new(data, fit, config);
    let d = diag_weights(&m.log_scale);
    let prec = weighted_gram(&data.x, &d) + prior.precision_beta0();
    let chol = cholesky_jittered(&prec, config.jitter, "beta precision")?;
    let rhs = prior.precision_beta0() * prior.mu_beta0() + data.x.transpose() * d.component_mul(&data.y);
    Ok((chol.solve(&rhs), symmetrize(chol.inverse())))
}

/// Log posterior of the gamma GLM (up to a constant):
/// `-1/2 sum z_i^T a - 1/2 sum w_i exp(-z_i^T a) - 1/2 (a - m)^T P (a - m)`.
fn gamma_glm_log_density(
    z: &DMatrix<f64>,
    w: &DVector<f64>,
    mean: &DVector<f64>,
    prec: &DMatrix<f64>,
    alpha: &DVector<f64>,
    config: &SolverConfig,
) -> f64 {
    let za = z * alpha;
    let lik: f64 = za
        .iter()
        .zip(w.iter())
        .map(|(e, wi)| -0.5 * e - 0.5 * wi * (-config.clip(*e)).exp())
        .sum();
    let d = alpha - mean;
    lik - 0.5 * d.dot(&(prec * &d))
}

/// Gradient `u(a)` and the positive-definite negative Hessian `-A(a)`.
fn gamma_glm_derivatives(
    z: &DMatrix<f64>,
    w: &DVector<f64>,
    mean: &DVector<f64>,
    prec: &DMatrix<f64>,
    alpha: &DVector<f64>,
    config: &SolverConfig,
) -> (DVector<f64>, DMatrix<f64>) {
    let za = z * alpha;
    let wt = DVector::from_iterator(
        za.len(),
        za.iter().zip(w.iter()).map(|(e, wi)| 0.5 * wi * (-config.clip(*e)).exp()),
    );
    let ones = DVector::from_element(za.len(), 0.5);
    let grad = z.transpose() * (wt.clone() - ones) - prec * (alpha - mean);
    let neg_hess = weighted_gram(z, &wt) + prec;
    (grad, neg_hess)
}

/// Posterior mode of the gamma GLM with log link, coefficient of variation
/// sqrt(2) and Gaussian prior `N(prior_mean, prior_precision^{-1})`, by Newton
/// iteration with step halving.
pub fn newton_gamma_glm_mode(
    z: &DMatrix<f64>,
    w: &DVector<f64>,
    prior_mean: &DVector<f64>,
    prior_precision: &DMatrix<f64>,
    start: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(DVector<f64>, NewtonInfo)> {
    if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Contract(format!("gamma responses must be positive, got {bad}")));
    }
    let objective = |a: &DVector<f64>| gamma_glm_log_density(z, w, prior_mean, prior_precision, a, config);
    let mut alpha = start.clone();
    let mut f = objective(&alpha);
    let mut iterations = 0;
    loop {
        let (grad, neg_hess) = gamma_glm_derivatives(z, w, prior_mean, prior_precision, &alpha, config);
        let gnorm = grad.amax();
        if gnorm <= config.newton_tol {
            return Ok((alpha, NewtonInfo { iterations, grad_norm: gnorm, converged: true }));
        }
        if iterations >= config.newton_max_iters {
            return Ok((alpha, NewtonInfo { iterations, grad_norm: gnorm, converged: false }));
        }
        iterations += 1;
        let step = cholesky_jittered(&neg_hess, config.jitter, "gamma GLM Hessian")?.solve(&grad);
        let slack = 1e-13 * f.abs().max(1.0);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = &alpha + &step * t;
            let fc = objective(&cand);
            if fc + slack >= f {
                alpha = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            let (grad, _) = gamma_glm_derivatives(z, w, prior_mean, prior_precision, &alpha, config);
            let gnorm = grad.amax();
            return Ok((alpha, NewtonInfo { iterations, grad_norm: gnorm, converged: gnorm <= config.newton_tol }));
        }
    }
}

/// One diagonal Newton step from `prev`: coordinate-wise the one-term Taylor
/// value used to rank variance predictors.
fn taylor_start(
    z: &DMatrix<f64>,
    w: &DVector<f64>,
    prior_mean: &DVector<f64>,
    prior_precision: &DMatrix<f64>,
    prev: &DVector<f64>,
    config: &SolverConfig,
) -> DVector<f64> {
    let (grad, neg_hess) = gamma_glm_derivatives(z, w, prior_mean, prior_precision, prev, config);
    let cand = DVector::from_iterator(
        prev.len(),
        (0..prev.len()).map(|j| prev[j] + grad[j] / neg_hess[(j, j)]),
    );
    let f = |a: &DVector<f64>| gamma_glm_log_density(z, w, prior_mean, prior_precision, a, config);
    if f(&cand) > f(prev) {
        cand
    } else {
        prev.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaUpdate {
    pub mu_alpha: DVector<f64>,
    pub sigma_alpha: DMatrix<f64>,
    pub accepted: bool,
    pub newton: NewtonInfo,
    /// Bound at the returned factors.
    pub elbo: f64,
}

fn strictly_better(new: f64, old: f64) -> bool {
    new > old + 1e-12 * old.abs().max(1.0)
}

/// Laplace-type update of the variance factor, kept only when it raises the bound.
pub fn update_alpha(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    config: &SolverConfig,
) -> Result<AlphaUpdate> {
    let old = elbo(data, prior, fit, config)?;
    let pseudo = PseudoResponses::new(data, fit, config);
    let (mu, sigma, newton) = if config.homoscedastic {
        homoscedastic_alpha(data, prior, &pseudo.w, config)?
    } else {
        let start = taylor_start(
            &data.z,
            &pseudo.w,
            prior.mu_alpha0(),
            prior.precision_alpha0(),
            &fit.mu_alpha,
            config,
        );
        let (mu, info) = newton_gamma_glm_mode(
            &data.z,
            &pseudo.w,
            prior.mu_alpha0(),
            prior.precision_alpha0(),
            &start,
            config,
        )?;
        let (_, neg_hess) =
            gamma_glm_derivatives(&data.z, &pseudo.w, prior.mu_alpha0(), prior.precision_alpha0(), &mu, config);
        let sigma = symmetrize(cholesky_jittered(&neg_hess, config.jitter, "alpha precision")?.inverse());
        (mu, sigma, info)
    };
    let cand = VariationalFit { mu_alpha: mu, sigma_alpha: sigma, ..fit.clone() };
    let new = elbo(data, prior, &cand, config);
    match new {
        Ok(v) if strictly_better(v, old) => Ok(AlphaUpdate {
            mu_alpha: cand.mu_alpha,
            sigma_alpha: cand.sigma_alpha,
            accepted: true,
            newton,
            elbo: v,
        }),
        _ => Ok(AlphaUpdate {
            mu_alpha: fit.mu_alpha.clone(),
            sigma_alpha: fit.sigma_alpha.clone(),
            accepted: false,
            newton,
            elbo: old,
        }),
    }
}

fn homoscedastic_alpha(
    data: &ModelData,
    prior: &PriorSpec,
    w: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(DVector<f64>, DMatrix<f64>, NewtonInfo)> {
    if data.q() != 1 || data.z.iter().any(|&v| v != 1.0) {
        return Err(Error::Contract(
            "homoscedastic mode needs a single all-ones variance column".into(),
        ));
    }
    let prior_var = prior.sigma_alpha0()[(0, 0)];
    let factor = homoscedastic::scalar_alpha_mode(
        w.sum(),
        data.n(),
        prior.mu_alpha0()[0],
        prior_var,
        config,
    );
    Ok((
        DVector::from_element(1, factor.mu_alpha_q),
        DMatrix::from_element(1, 1, factor.var_alpha_q),
        factor.newton,
    ))
}

/// Closed-form maximizers of `elbo + log IG(sigma2_beta) + log IG(sigma2_alpha)`.
pub fn update_hyper(fit: &VariationalFit, prior: &PriorSpec) -> Result<(f64, f64)> {
    let iso = prior
        .isotropic_params()
        .filter(|i| i.shrink)
        .ok_or_else(|| Error::Contract("hyperparameter update requires shrinkage to be enabled".into()))?;
    let (a, b) = (iso.a, iso.b);
    let p = fit.mu_beta.len() as f64;
    let q = fit.mu_alpha.len() as f64;
    let s2b = (b + 0.5 * fit.mu_beta.norm_squared() + 0.5 * fit.sigma_beta.trace()) / (a + 1.0 + p / 2.0);
    let s2a = (b + 0.5 * fit.mu_alpha.norm_squared() + 0.5 * fit.sigma_alpha.trace()) / (a + 1.0 + q / 2.0);
    Ok((s2b, s2a))
}

fn objective(data: &ModelData, prior: &PriorSpec, fit: &VariationalFit, config: &SolverConfig) -> Result<f64> {
    let l = elbo(data, prior, fit, config)?;
    Ok(match prior.isotropic_params() {
        Some(iso) if iso.shrink => l + iso.log_hyperprior(),
        _ => l,
    })
}

/// Result of [`fit_vb_full`]: the fit, its trace and the prior in force at the
/// end (differs from the input only when shrinkage is enabled).
#[derive(Debug, Clone)]
pub struct VbOutput {
    pub fit: VariationalFit,
    pub trace: FitTrace,
    pub prior: PriorSpec,
}

pub fn fit_vb(
    data: &ModelData,
    prior: &PriorSpec,
    config: &SolverConfig,
) -> Result<(VariationalFit, FitTrace)> {
    let out = fit_vb_full(data, prior, config)?;
    Ok((out.fit, out.trace))
}

/// Alternates the mean, variance and (optional) hyperparameter updates until a
/// sweep raises the objective by less than `elbo_tol`. Every step is guarded
/// so the recorded objective never decreases.
pub fn fit_vb_full(data: &ModelData, prior: &PriorSpec, config: &SolverConfig) -> Result<VbOutput> {
    config.validate()?;
    let mut prior = prior.clone();
    let shrink = prior.shrink_enabled();
    let mut fit = init_fit(data, &prior, config)?;
    let mut obj = objective(data, &prior, &fit, config)?;
    let mut trace = FitTrace {
        initial_elbo: obj,
        hyper_values: shrink.then(Vec::new),
        ..FitTrace::default()
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_outer_iters {
        iterations += 1;
        let start = obj;

        let (mb, sb) = update_beta(data, &prior, &fit, config)?;
        let cand = VariationalFit { mu_beta: mb, sigma_beta: sb, ..fit.clone() };
        if let Ok(v) = objective(data, &prior, &cand, config) {
            if v >= obj {
                fit = cand;
                obj = v;
            }
        }

        let au = update_alpha(data, &prior, &fit, config)?;
        trace.newton.push(au.newton);
        trace.alpha_update_accepted.push(au.accepted);
        if au.accepted {
            fit.mu_alpha = au.mu_alpha;
            fit.sigma_alpha = au.sigma_alpha;
            obj = objective(data, &prior, &fit, config)?;
        }

        if shrink {
            let (s2b, s2a) = update_hyper(&fit, &prior)?;
            let cand_prior = prior.with_variances(s2b, s2a)?;
            let v = objective(data, &cand_prior, &fit, config)?;
            if v >= obj {
                prior = cand_prior;
                obj = v;
            }
            let iso = prior.isotropic_params().expect("isotropic");
            if let Some(h) = trace.hyper_values.as_mut() {
                h.push((iso.sigma2_beta, iso.sigma2_alpha));
            }
        }

        trace.elbo_per_iteration.push(obj);
        if obj - start < config.elbo_tol {
            converged = true;
            break;
        }
    }

    // Leave the mean factor at its exact optimum for the final variance factor.
    let (mb, sb) = update_beta(data, &prior, &fit, config)?;
    let cand = VariationalFit { mu_beta: mb, sigma_beta: sb, ..fit.clone() };
    if let Ok(v) = objective(data, &prior, &cand, config) {
        if v >= obj {
            fit = cand;
            obj = v;
            if let Some(last) = trace.elbo_per_iteration.last_mut() {
                *last = obj;
            }
        }
    }

    fit.elbo = elbo(data, &prior, &fit, config)?;
    fit.iterations = iterations;
    fit.converged = converged;
    Ok(VbOutput { fit, trace, prior })
}
