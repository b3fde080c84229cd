//! Constant-variance special case: a scalar log-variance with a closed-form
//! update, and mean-model ranking that reduces to residual correlation.

use serde::{Deserialize, Serialize};

use crate::data::DesignData;
use crate::error::{Error, Result};
use crate::fit::SolverConfig;
use crate::selection::{rank_mean_add, RankScore, SearchContext, SelectionState};
use crate::vb::NewtonInfo;

/// Gaussian factor for the scalar log-variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAlphaFactor {
    pub mu_alpha_q: f64,
    pub var_alpha_q: f64,
    pub prior_var: f64,
    pub newton: NewtonInfo,
}

/// Taylor closed form for the mode (exact for the `exp(-a) ~ 1 - a` surrogate).
pub fn closed_form_mode(v: f64, n: usize, prior_mean: f64, prior_var: f64) -> f64 {
    (v - n as f64 + 2.0 * prior_mean / prior_var) / (v + 2.0 / prior_var)
}

fn scalar_grad(v: f64, n: f64, m0: f64, s0: f64, a: f64) -> (f64, f64) {
    let e = 0.5 * v * (-a).exp();
    (-0.5 * n + e - (a - m0) / s0, e + 1.0 / s0)
}

/// Closed-form mode and variance of `q(alpha) ~ exp(-n a/2 - v e^{-a}/2 - (a-m)^2 / (2 s0))`,
/// optionally polished by Newton to the exact mode.
pub fn scalar_alpha_mode(
    v: f64,
    n: usize,
    prior_mean: f64,
    prior_var: f64,
    config: &SolverConfig,
) -> ScalarAlphaFactor {
    let nf = n as f64;
    let mut a = closed_form_mode(v, n, prior_mean, prior_var);
    let mut iterations = 0;
    let (mut g, _) = scalar_grad(v, nf, prior_mean, prior_var, a);
    if config.homoscedastic_polish {
        while g.abs() > config.newton_tol && iterations < config.newton_max_iters {
            let (_, h) = scalar_grad(v, nf, prior_mean, prior_var, a);
            // Concave in `a`; the Newton step never overshoots from below the
            // mode, so a halving guard on the gradient sign is enough.
            let mut step = g / h;
            let mut next = a + step;
            while scalar_grad(v, nf, prior_mean, prior_var, next).0.abs() > g.abs() && step.abs() > 1e-300 {
                step *= 0.5;
                next = a + step;
            }
            iterations += 1;
            if next == a {
                break;
            }
            a = next;
            g = scalar_grad(v, nf, prior_mean, prior_var, a).0;
        }
    }
    let var = 1.0 / (0.5 * v * (-a).exp() + 1.0 / prior_var);
    ScalarAlphaFactor {
        mu_alpha_q: a,
        var_alpha_q: var,
        prior_var,
        newton: NewtonInfo { iterations, grad_norm: g.abs(), converged: g.abs() <= config.newton_tol },
    }
}

/// The printed closed forms with a zero prior mean; `polish` refines the mode.
pub fn update_alpha_scalar(v: f64, prior_var: f64, n: usize, polish: bool) -> Result<ScalarAlphaFactor> {
    if !(v > 0.0) || n == 0 || !(prior_var > 0.0) {
        return Err(Error::Contract("need v > 0, n >= 1 and a positive prior variance".into()));
    }
    let config = SolverConfig { homoscedastic_polish: polish, ..SolverConfig::default() };
    Ok(scalar_alpha_mode(v, n, 0.0, prior_var, &config))
}

/// Tolerance for the unit sum-of-squares check.
const UNIT_SS_TOL: f64 = 1e-8;

/// Mean-add score in the constant-variance model together with the residual
/// correlation `|sum_i x_ij r_i|` that orders candidates identically.
pub fn rank_mean_add_homo(
    ctx: &SearchContext<'_>,
    state: &SelectionState,
    j: usize,
) -> Result<(RankScore, f64)> {
    check_homoscedastic_state(ctx.data, state)?;
    let col = ctx.data.x.column(j);
    let n = ctx.data.n() as f64;
    let ss: f64 = col.iter().map(|v| v * v).sum();
    if (ss - n).abs() > UNIT_SS_TOL * n {
        return Err(Error::Contract(format!(
            "column '{}' is not standardized to unit sum of squares",
            ctx.data.mean_names[j]
        )));
    }
    let corr = col.dot(&state.residual).abs();
    Ok((rank_mean_add(ctx, state, j), corr))
}

fn check_homoscedastic_state(data: &DesignData, state: &SelectionState) -> Result<()> {
    match (data.intercept_var, state.index.var.as_slice()) {
        (Some(k), [only]) if *only == k => Ok(()),
        _ => Err(Error::Contract("variance model must be intercept-only".into())),
    }
}
