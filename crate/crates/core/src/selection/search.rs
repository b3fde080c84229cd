use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rank::ranked;
use super::{
    rank_mean_add, rank_mean_drop, rank_var_add, rank_var_drop, Direction, ModelIndex,
    ModelPriorPolicy, RankScore, SearchContext, SelectionState,
};
use crate::data::DesignData;
use crate::error::{Error, Result};
use crate::fit::{SolverConfig, VariationalFit};
use crate::prior::IsotropicPrior;
use crate::vb::FitTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub solver: SolverConfig,
    pub prior: IsotropicPrior,
    pub policy: ModelPriorPolicy,
    /// Variance candidates must already be in the mean model; dropping a
    /// mean predictor also drops it from the variance model.
    pub restricted: bool,
    /// How many top-ranked candidates to refit before giving up on a step.
    pub max_tries: usize,
    /// Cap on outer passes per phase.
    pub max_iterations: usize,
    /// Starting non-intercept columns.
    pub initial_mean: Vec<usize>,
    pub initial_var: Vec<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            prior: IsotropicPrior::new(100.0, 100.0),
            policy: ModelPriorPolicy::Ebic,
            restricted: false,
            max_tries: 1,
            max_iterations: 1000,
            initial_mean: Vec::new(),
            initial_var: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Start,
    AddMean,
    AddVar,
    DropMean,
    DropVar,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::AddMean => "add_mean",
            Self::AddVar => "add_var",
            Self::DropMean => "drop_mean",
            Self::DropVar => "drop_var",
        }
    }
}

impl From<Direction> for Action {
    fn from(d: Direction) -> Self {
        match d {
            Direction::AddMean => Self::AddMean,
            Direction::AddVar => Self::AddVar,
            Direction::DropMean => Self::DropMean,
            Direction::DropVar => Self::DropVar,
        }
    }
}

/// One accepted move (or the starting model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub step: usize,
    pub phase: Phase,
    /// Outer pass of the phase in which the move was accepted.
    pub iteration: usize,
    pub action: Action,
    pub predictor: Option<usize>,
    pub name: String,
    /// Ranking score of the move; NaN for the starting model.
    #[serde(with = "nan_as_null")]
    pub one_step_score: f64,
    /// Exact bound plus log model prior after the move.
    pub exact_score: f64,
    pub elbo: f64,
    pub log_prior: f64,
    /// Full-length coefficient snapshots, zero for inactive columns.
    pub mean_coefficients: Vec<f64>,
    pub var_coefficients: Vec<f64>,
}

/// JSON has no NaN; store it as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A full pass changed neither model.
    NoChange,
    IterationLimit,
}

/// Newton behaviour observed during a search.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NewtonStats {
    /// Accepted variance-factor updates inside model fits.
    pub alpha_accepted: usize,
    /// Largest gradient max-norm at an accepted update.
    pub alpha_max_grad: f64,
    /// One-dimensional mode searches made while ranking variance candidates.
    pub rank_calls: usize,
    pub rank_converged: usize,
    pub rank_within_10: usize,
    pub rank_max_iterations: usize,
}

impl NewtonStats {
    pub fn record_trace(&mut self, trace: &FitTrace) {
        for (acc, info) in trace.alpha_update_accepted.iter().zip(&trace.newton) {
            if *acc {
                self.alpha_accepted += 1;
                self.alpha_max_grad = self.alpha_max_grad.max(info.grad_norm);
            }
        }
    }

    pub fn record_rank(&mut self, score: &RankScore) {
        if let Some(info) = score.newton {
            self.rank_calls += 1;
            self.rank_converged += usize::from(info.converged);
            self.rank_within_10 += usize::from(info.converged && info.iterations <= 10);
            self.rank_max_iterations = self.rank_max_iterations.max(info.iterations);
        }
    }

    pub fn merge(&mut self, other: &NewtonStats) {
        self.alpha_accepted += other.alpha_accepted;
        self.alpha_max_grad = self.alpha_max_grad.max(other.alpha_max_grad);
        self.rank_calls += other.rank_calls;
        self.rank_converged += other.rank_converged;
        self.rank_within_10 += other.rank_within_10;
        self.rank_max_iterations = self.rank_max_iterations.max(other.rank_max_iterations);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub index: ModelIndex,
    pub fit: VariationalFit,
    pub sigma2_beta: f64,
    pub sigma2_alpha: f64,
    pub elbo: f64,
    pub log_prior: f64,
    pub score: f64,
    pub path: Vec<PathStep>,
    pub stopped_reason: StopReason,
    pub forward_iterations: usize,
    pub backward_iterations: usize,
    /// Number of full model fits, including the starting model.
    pub refits: usize,
    pub newton: NewtonStats,
    pub mean_names: Vec<String>,
    pub var_names: Vec<String>,
}

impl SelectionResult {
    pub fn selected_mean_names(&self) -> Vec<&str> {
        self.index.mean_predictors().iter().map(|&j| self.mean_names[j].as_str()).collect()
    }

    pub fn selected_var_names(&self) -> Vec<&str> {
        self.index.var_predictors().iter().map(|&j| self.var_names[j].as_str()).collect()
    }
}

struct Search<'a> {
    ctx: SearchContext<'a>,
    cfg: &'a SelectionConfig,
    state: SelectionState,
    path: Vec<PathStep>,
    newton: NewtonStats,
    refits: usize,
}

impl<'a> Search<'a> {
    fn start(data: &'a DesignData, cfg: &'a SelectionConfig) -> Result<Self> {
        let ctx = SearchContext::new(data, cfg.prior, cfg.policy.clone(), cfg.solver)?;
        if cfg.max_tries == 0 || cfg.max_iterations == 0 {
            return Err(Error::InvalidData("max_tries and max_iterations must be positive".into()));
        }
        if data.intercept_mean.is_none() || data.intercept_var.is_none() {
            return Err(Error::Contract("selection needs intercepts in both models".into()));
        }
        if cfg.restricted && data.mean_names != data.var_names {
            return Err(Error::Contract(
                "restricted search needs identical mean and variance designs".into(),
            ));
        }
        if cfg.solver.homoscedastic && !cfg.initial_var.is_empty() {
            return Err(Error::Contract("homoscedastic search keeps the variance model intercept-only".into()));
        }
        let index = ModelIndex::with_sets(data, &cfg.initial_mean, &cfg.initial_var)?;
        if index.mean_predictors().len() != cfg.initial_mean.len()
            || index.var_predictors().len() != cfg.initial_var.len()
        {
            return Err(Error::InvalidData("initial sets must not contain intercepts or repeats".into()));
        }
        if cfg.restricted && !index.var_within_mean() {
            return Err(Error::Contract("restricted search needs the initial variance set inside the mean set".into()));
        }
        let state = ctx.fit_model(index)?;
        let mut s = Self { ctx, cfg, state, path: Vec::new(), newton: NewtonStats::default(), refits: 1 };
        s.newton.record_trace(&s.state.trace);
        s.push(Phase::Start, 0, Action::Start, None, f64::NAN);
        Ok(s)
    }

    fn push(&mut self, phase: Phase, iteration: usize, action: Action, predictor: Option<usize>, one_step: f64) {
        let name = match (action, predictor) {
            (Action::AddVar | Action::DropVar, Some(j)) => self.ctx.data.var_names[j].clone(),
            (_, Some(j)) => self.ctx.data.mean_names[j].clone(),
            (_, None) => String::new(),
        };
        self.path.push(PathStep {
            step: self.path.len(),
            phase,
            iteration,
            action,
            predictor,
            name,
            one_step_score: one_step,
            exact_score: self.state.score(),
            elbo: self.state.fit.elbo,
            log_prior: self.state.log_prior,
            mean_coefficients: self.state.mean_coefficients(),
            var_coefficients: self.state.var_coefficients(),
        });
    }

    fn target(&self, s: &RankScore) -> ModelIndex {
        let idx = &self.state.index;
        match s.direction {
            Direction::AddMean => idx.with_mean(s.candidate),
            Direction::AddVar => idx.with_var(s.candidate),
            Direction::DropMean if self.cfg.restricted => idx.without_mean(s.candidate).without_var(s.candidate),
            Direction::DropMean => idx.without_mean(s.candidate),
            Direction::DropVar => idx.without_var(s.candidate),
        }
    }

    fn score_all<F>(&mut self, candidates: &[usize], f: F) -> Vec<RankScore>
    where
        F: Fn(&SearchContext<'_>, &SelectionState, usize) -> RankScore + Sync,
    {
        let (ctx, state) = (&self.ctx, &self.state);
        let scores: Vec<RankScore> = candidates.par_iter().map(|&j| f(ctx, state, j)).collect();
        for s in &scores {
            self.newton.record_rank(s);
        }
        scores
    }

    /// Refits the top-ranked moves in order; keeps the first that improves
    /// the exact score.
    fn try_moves(&mut self, scores: Vec<RankScore>, phase: Phase, iteration: usize) -> Result<bool> {
        for s in ranked(scores).into_iter().take(self.cfg.max_tries) {
            let cand = self.ctx.fit_model(self.target(&s))?;
            self.refits += 1;
            self.newton.record_trace(&cand.trace);
            if cand.score() > self.state.score() {
                self.state = cand;
                self.push(phase, iteration, s.direction.into(), Some(s.candidate), s.total);
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn var_stage_enabled(&self) -> bool {
        !self.cfg.solver.homoscedastic
    }

    fn forward(&mut self) -> Result<(usize, StopReason)> {
        let mut iteration = 0;
        loop {
            iteration += 1;
            let mut changed = false;

            let cands = self.state.index.mean_add_candidates();
            if !cands.is_empty() {
                let scores = self.score_all(&cands, rank_mean_add);
                changed |= self.try_moves(scores, Phase::Forward, iteration)?;
            }

            if self.var_stage_enabled() {
                let mut cands = self.state.index.var_add_candidates();
                if self.cfg.restricted {
                    let idx = &self.state.index;
                    cands.retain(|&j| idx.contains_mean(j));
                }
                if !cands.is_empty() {
                    let scores = self.score_all(&cands, rank_var_add);
                    changed |= self.try_moves(scores, Phase::Forward, iteration)?;
                }
            }

            if !changed {
                return Ok((iteration, StopReason::NoChange));
            }
            if iteration >= self.cfg.max_iterations {
                return Ok((iteration, StopReason::IterationLimit));
            }
        }
    }

    fn backward(&mut self) -> Result<(usize, StopReason)> {
        let coupled = self.cfg.restricted;
        let mut iteration = 0;
        loop {
            iteration += 1;
            let mut changed = false;

            let cands = self.state.index.mean_predictors();
            if !cands.is_empty() {
                let scores = self.score_all(&cands, |c, s, j| rank_mean_drop(c, s, j, coupled));
                changed |= self.try_moves(scores, Phase::Backward, iteration)?;
            }

            if self.var_stage_enabled() {
                let cands = self.state.index.var_predictors();
                if !cands.is_empty() {
                    let scores = self.score_all(&cands, rank_var_drop);
                    changed |= self.try_moves(scores, Phase::Backward, iteration)?;
                }
            }

            if !changed {
                return Ok((iteration, StopReason::NoChange));
            }
            if iteration >= self.cfg.max_iterations {
                return Ok((iteration, StopReason::IterationLimit));
            }
        }
    }

    fn finish(self, forward: usize, backward: usize, stopped_reason: StopReason) -> SelectionResult {
        let st = self.state;
        SelectionResult {
            score: st.score(),
            elbo: st.fit.elbo,
            log_prior: st.log_prior,
            sigma2_beta: st.sigma2_beta,
            sigma2_alpha: st.sigma2_alpha,
            index: st.index,
            fit: st.fit,
            path: self.path,
            stopped_reason,
            forward_iterations: forward,
            backward_iterations: backward,
            refits: self.refits,
            newton: self.newton,
            mean_names: self.ctx.data.mean_names.clone(),
            var_names: self.ctx.data.var_names.clone(),
        }
    }
}

/// Greedy forward search: alternately add the best-ranked mean predictor and
/// the best-ranked variance predictor while the exact score improves.
pub fn forward_var(data: &DesignData, cfg: &SelectionConfig) -> Result<SelectionResult> {
    let mut s = Search::start(data, cfg)?;
    let (fwd, reason) = s.forward()?;
    Ok(s.finish(fwd, 0, reason))
}

/// Forward search followed by backward elimination with the same
/// exact-refit acceptance rule.
pub fn forward_backward_var(data: &DesignData, cfg: &SelectionConfig) -> Result<SelectionResult> {
    let mut s = Search::start(data, cfg)?;
    let (fwd, reason) = s.forward()?;
    if reason == StopReason::IterationLimit {
        return Ok(s.finish(fwd, 0, reason));
    }
    let (bwd, reason) = s.backward()?;
    Ok(s.finish(fwd, bwd, reason))
}
