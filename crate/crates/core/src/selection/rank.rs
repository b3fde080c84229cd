//! One-step scores for adding or dropping a single predictor. All current-fit
//! quantities are frozen; only the candidate's own factor is optimized.

use nalgebra::{DVector, DVectorView};
use serde::{Deserialize, Serialize};

use super::{model_log_prior, ModelIndex, SearchContext, SelectionState};
use crate::linalg::{delete_entry, delete_row_col, row_quad_forms, select_columns};
use crate::vb::NewtonInfo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AddMean,
    AddVar,
    DropMean,
    DropVar,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AddMean => "add_mean",
            Self::AddVar => "add_var",
            Self::DropMean => "drop_mean",
            Self::DropVar => "drop_var",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub candidate: usize,
    pub direction: Direction,
    /// Approximate change of the bound caused by the move.
    pub bound_delta: f64,
    pub log_prior_delta: f64,
    pub total: f64,
    /// Optimized mean and variance of the candidate's coefficient factor.
    pub candidate_mu: f64,
    pub candidate_var: f64,
    /// Mode search for variance candidates.
    pub newton: Option<NewtonInfo>,
}

impl RankScore {
    fn new(
        candidate: usize,
        direction: Direction,
        bound_delta: f64,
        log_prior_delta: f64,
        (candidate_mu, candidate_var): (f64, f64),
        newton: Option<NewtonInfo>,
    ) -> Self {
        Self {
            candidate,
            direction,
            bound_delta,
            log_prior_delta,
            total: bound_delta + log_prior_delta,
            candidate_mu,
            candidate_var,
            newton,
        }
    }
}

/// Optimal `(mu, sigma2)` for a new mean coefficient and its bound increment
/// `1/2 log(sigma2 / s2b) + mu^2 / (2 sigma2)`.
pub(crate) fn mean_increment(
    x: DVectorView<'_, f64>,
    residual: &DVector<f64>,
    d: &DVector<f64>,
    s2b: f64,
) -> (f64, f64, f64) {
    let mut num = 0.0;
    let mut den = 1.0 / s2b;
    for i in 0..x.len() {
        num += x[i] * residual[i] * d[i];
        den += x[i] * x[i] * d[i];
    }
    let var = 1.0 / den;
    let mu = num * var;
    (mu, var, 0.5 * (var / s2b).ln() + 0.5 * mu * mu / var)
}

/// One-dimensional log-density of a new variance coefficient `a`, with
/// `t_i(a) = w_i exp(-clip(e_i + z_i a))`:
/// `-a^2/(2 s2) - a/2 sum z_i - 1/2 sum t_i(a)`.
struct VarCoordinate<'a> {
    z: DVectorView<'a, f64>,
    w: &'a DVector<f64>,
    e: &'a DVector<f64>,
    s2: f64,
    clip: f64,
    zsum: f64,
}

impl VarCoordinate<'_> {
    fn t(&self, i: usize, a: f64) -> f64 {
        self.w[i] * (-(self.e[i] + self.z[i] * a).clamp(-self.clip, self.clip)).exp()
    }

    fn value(&self, a: f64) -> f64 {
        let s: f64 = (0..self.z.len()).map(|i| self.t(i, a)).sum();
        -a * a / (2.0 * self.s2) - 0.5 * a * self.zsum - 0.5 * s
    }

    /// First and second derivative.
    fn derivs(&self, a: f64) -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        for i in 0..self.z.len() {
            let t = self.t(i, a);
            g += self.z[i] * t;
            h += self.z[i] * self.z[i] * t;
        }
        (-a / self.s2 - 0.5 * self.zsum + 0.5 * g, -1.0 / self.s2 - 0.5 * h)
    }

    /// Single Taylor step about zero.
    fn taylor_start(&self) -> f64 {
        let (mut num, mut den) = (0.0, 1.0 / self.s2);
        for i in 0..self.z.len() {
            let v = self.t(i, 0.0);
            num += 0.5 * self.z[i] * (v - 1.0);
            den += 0.5 * self.z[i] * self.z[i] * v;
        }
        num / den
    }

    fn mode(&self, tol: f64, max_iters: usize) -> (f64, NewtonInfo) {
        let mut a = self.taylor_start();
        let mut f = self.value(a);
        let mut iterations = 0;
        loop {
            let (g, h) = self.derivs(a);
            if g.abs() <= tol {
                return (a, NewtonInfo { iterations, grad_norm: g.abs(), converged: true });
            }
            if iterations >= max_iters {
                return (a, NewtonInfo { iterations, grad_norm: g.abs(), converged: false });
            }
            iterations += 1;
            let step = -g / h;
            let slack = 1e-13 * f.abs().max(1.0);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let cand = a + t * step;
                let fc = self.value(cand);
                if fc + slack >= f {
                    moved = cand != a;
                    a = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                let g = self.derivs(a).0.abs();
                return (a, NewtonInfo { iterations, grad_norm: g, converged: g <= tol });
            }
        }
    }

    /// Bound increment at `(mu, var)` for the new coefficient.
    fn increment(&self, mu: f64, var: f64) -> f64 {
        let mut data = 0.0;
        for i in 0..self.z.len() {
            let zi = self.z[i];
            let new = (self.e[i] + zi * mu - 0.5 * zi * zi * var).clamp(-self.clip, self.clip);
            let old = self.e[i].clamp(-self.clip, self.clip);
            data += self.w[i] * ((-new).exp() - (-old).exp());
        }
        0.5 + 0.5 * (var / self.s2).ln() - var / (2.0 * self.s2) - mu * mu / (2.0 * self.s2)
            - 0.5 * mu * self.zsum
            - 0.5 * data
    }
}

fn var_increment(
    ctx: &SearchContext<'_>,
    z: DVectorView<'_, f64>,
    w: &DVector<f64>,
    e: &DVector<f64>,
    s2a: f64,
) -> (f64, f64, f64, NewtonInfo) {
    let coord = VarCoordinate { zsum: z.sum(), z, w, e, s2: s2a, clip: ctx.config.exponent_clip };
    let (mu, info) = coord.mode(ctx.config.newton_tol, ctx.config.newton_max_iters);
    let var = -1.0 / coord.derivs(mu).1;
    (mu, var, coord.increment(mu, var), info)
}

fn position(set: &[usize], j: usize) -> usize {
    set.binary_search(&j).unwrap_or_else(|_| panic!("column {j} is not active"))
}

/// Exponents `z^T mu - z^T Sigma z / 2` of the current variance fit with the
/// active variance column `j` deleted.
fn exponent_without_var(ctx: &SearchContext<'_>, state: &SelectionState, j: usize) -> DVector<f64> {
    let k = position(&state.index.var, j);
    let cols: Vec<usize> = state.index.var.iter().copied().filter(|&c| c != j).collect();
    let z = select_columns(&ctx.data.z, &cols);
    let mu = delete_entry(&state.fit.mu_alpha, k);
    let sigma = delete_row_col(&state.fit.sigma_alpha, k);
    let zsz = row_quad_forms(&z, &sigma);
    (&z * mu).zip_map(&zsz, |m, s| m - 0.5 * s)
}

fn prior_delta(ctx: &SearchContext<'_>, state: &SelectionState, next: &ModelIndex) -> f64 {
    model_log_prior(next, &ctx.policy) - state.log_prior
}

fn weights(ctx: &SearchContext<'_>, e: &DVector<f64>) -> DVector<f64> {
    e.map(|v| (-ctx.clip(v)).exp())
}

/// Score for adding mean column `j`.
///
/// # Panics
/// If `j` is already active or is the intercept.
pub fn rank_mean_add(ctx: &SearchContext<'_>, state: &SelectionState, j: usize) -> RankScore {
    assert!(!state.index.contains_mean(j) && Some(j) != state.index.intercept_mean);
    let d = weights(ctx, &state.exponent);
    let (mu, var, delta) = mean_increment(ctx.data.x.column(j), &state.residual, &d, state.sigma2_beta);
    let lp = prior_delta(ctx, state, &state.index.with_mean(j));
    RankScore::new(j, Direction::AddMean, delta, lp, (mu, var), None)
}

/// Score for adding variance column `j`.
///
/// # Panics
/// If `j` is already active or is the intercept.
pub fn rank_var_add(ctx: &SearchContext<'_>, state: &SelectionState, j: usize) -> RankScore {
    assert!(!state.index.contains_var(j) && Some(j) != state.index.intercept_var);
    let w = state.w();
    let (mu, var, delta, info) =
        var_increment(ctx, ctx.data.z.column(j), &w, &state.exponent, state.sigma2_alpha);
    let lp = prior_delta(ctx, state, &state.index.with_var(j));
    RankScore::new(j, Direction::AddVar, delta, lp, (mu, var), Some(info))
}

/// Score for dropping mean column `j`. With `coupled`, `j` also leaves the
/// variance model when active there, and the frozen variance fit loses it too.
///
/// # Panics
/// If `j` is not active or is the intercept.
pub fn rank_mean_drop(ctx: &SearchContext<'_>, state: &SelectionState, j: usize, coupled: bool) -> RankScore {
    assert!(Some(j) != state.index.intercept_mean);
    let k = position(&state.index.mean, j);
    let x = ctx.data.x.column(j);
    let bj = state.fit.mu_beta[k];
    let residual = DVector::from_fn(state.residual.len(), |i, _| state.residual[i] + x[i] * bj);
    let also_var = coupled && state.index.contains_var(j);
    let e = if also_var { exponent_without_var(ctx, state, j) } else { state.exponent.clone() };
    let (mu, var, gamma) = mean_increment(x, &residual, &weights(ctx, &e), state.sigma2_beta);
    let mut next = state.index.without_mean(j);
    if also_var {
        next = next.without_var(j);
    }
    let lp = prior_delta(ctx, state, &next);
    RankScore::new(j, Direction::DropMean, -gamma, lp, (mu, var), None)
}

/// Score for dropping variance column `j`.
///
/// # Panics
/// If `j` is not active or is the intercept.
pub fn rank_var_drop(ctx: &SearchContext<'_>, state: &SelectionState, j: usize) -> RankScore {
    assert!(Some(j) != state.index.intercept_var);
    let e = exponent_without_var(ctx, state, j);
    let w = state.w();
    let (mu, var, gamma, info) = var_increment(ctx, ctx.data.z.column(j), &w, &e, state.sigma2_alpha);
    let lp = prior_delta(ctx, state, &state.index.without_var(j));
    RankScore::new(j, Direction::DropVar, -gamma, lp, (mu, var), Some(info))
}

/// Best score; ties within `1e-12` go to the smaller candidate index.
/// Scores must be supplied in ascending candidate order.
pub(crate) fn best_score(scores: &[RankScore]) -> Option<RankScore> {
    let mut best: Option<RankScore> = None;
    for s in scores {
        match best {
            Some(b) if !(s.total > b.total + 1e-12) => {}
            _ if !s.total.is_finite() => {}
            _ => best = Some(*s),
        }
    }
    best
}

/// Scores ordered best first with the same tie rule as [`best_score`].
pub(crate) fn ranked(mut scores: Vec<RankScore>) -> Vec<RankScore> {
    scores.retain(|s| s.total.is_finite());
    let mut out = Vec::with_capacity(scores.len());
    while let Some(b) = best_score(&scores) {
        scores.retain(|s| s.candidate != b.candidate);
        out.push(b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(candidate: usize, total: f64) -> RankScore {
        RankScore::new(candidate, Direction::AddMean, total, 0.0, (0.0, 1.0), None)
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let s = vec![score(1, 2.0), score(3, 2.0 + 1e-13), score(4, 1.0)];
        assert_eq!(best_score(&s).unwrap().candidate, 1);
        let s = vec![score(1, 2.0), score(3, 2.1)];
        assert_eq!(best_score(&s).unwrap().candidate, 3);
        let order: Vec<usize> = ranked(vec![score(1, 0.5), score(2, f64::NAN), score(3, 2.0)])
            .iter()
            .map(|s| s.candidate)
            .collect();
        assert_eq!(order, vec![3, 1]);
    }

    #[test]
    fn orthogonal_candidate_gets_zero_mean() {
        let x = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        let r = DVector::from_vec(vec![2.0, 2.0, 3.0, 3.0]);
        let d = DVector::from_element(4, 1.0);
        let (mu, var, delta) = mean_increment(x.column(0), &r, &d, 10.0);
        assert_eq!(mu, 0.0);
        assert!((delta - 0.5 * (var / 10.0).ln()).abs() < 1e-15);
        assert!(delta <= 0.0);
    }

    #[test]
    fn symmetric_variance_candidate_has_zero_mode() {
        let z = DVector::from_vec(vec![1.0, -1.0, 2.0, -2.0]);
        let w = DVector::from_element(4, 1.5);
        let e = DVector::zeros(4);
        let c = VarCoordinate { zsum: 0.0, z: z.column(0), w: &w, e: &e, s2: 100.0, clip: 30.0 };
        assert_eq!(c.taylor_start(), 0.0);
        let (mode, info) = c.mode(1e-10, 50);
        assert!(info.converged);
        assert!(mode.abs() < 1e-12);
    }
}
