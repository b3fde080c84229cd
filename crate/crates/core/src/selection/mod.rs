//! Greedy forward and forward-backward search over mean and variance models.
//!
//! Candidates are ranked with one-step increments of the lower bound computed
//! from the frozen current fit; only the top-ranked move is refitted and it is
//! accepted when the exact refitted bound plus log model prior improves.

mod prior;
mod rank;
mod search;

pub use prior::{log_binomial, model_log_prior, ModelPriorPolicy};
pub use rank::{rank_mean_add, rank_mean_drop, rank_var_add, rank_var_drop, Direction, RankScore};
pub use search::{
    forward_backward_var, forward_var, Action, NewtonStats, PathStep, Phase, SelectionConfig,
    SelectionResult, StopReason,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bound::ObservationMoments;
use crate::data::DesignData;
use crate::error::{Error, Result};
use crate::fit::{SolverConfig, VariationalFit};
use crate::linalg::row_quad_forms;
use crate::prior::{IsotropicPrior, PriorSpec};
use crate::vb::{fit_vb_full, FitTrace};

/// Active mean (`mean`) and variance (`var`) columns, both kept sorted.
/// Intercepts are always active and never candidates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelIndex {
    pub mean: Vec<usize>,
    pub var: Vec<usize>,
    pub p: usize,
    pub q: usize,
    pub intercept_mean: Option<usize>,
    pub intercept_var: Option<usize>,
}

impl ModelIndex {
    pub fn intercepts_only(data: &DesignData) -> Self {
        Self {
            mean: data.intercept_mean.into_iter().collect(),
            var: data.intercept_var.into_iter().collect(),
            p: data.p(),
            q: data.q(),
            intercept_mean: data.intercept_mean,
            intercept_var: data.intercept_var,
        }
    }

    /// Model with the given non-intercept columns (intercepts added).
    pub fn with_sets(data: &DesignData, mean: &[usize], var: &[usize]) -> Result<Self> {
        let mut idx = Self::intercepts_only(data);
        for &j in mean {
            if j >= idx.p {
                return Err(Error::Dimension(format!("mean column {j} out of range")));
            }
            idx = idx.with_mean(j);
        }
        for &j in var {
            if j >= idx.q {
                return Err(Error::Dimension(format!("variance column {j} out of range")));
            }
            idx = idx.with_var(j);
        }
        Ok(idx)
    }

    fn insert(v: &[usize], j: usize) -> Vec<usize> {
        let mut out = v.to_vec();
        if let Err(pos) = out.binary_search(&j) {
            out.insert(pos, j);
        }
        out
    }

    pub fn with_mean(&self, j: usize) -> Self {
        Self { mean: Self::insert(&self.mean, j), ..self.clone() }
    }

    pub fn with_var(&self, j: usize) -> Self {
        Self { var: Self::insert(&self.var, j), ..self.clone() }
    }

    pub fn without_mean(&self, j: usize) -> Self {
        Self { mean: self.mean.iter().copied().filter(|&k| k != j).collect(), ..self.clone() }
    }

    pub fn without_var(&self, j: usize) -> Self {
        Self { var: self.var.iter().copied().filter(|&k| k != j).collect(), ..self.clone() }
    }

    /// Active non-intercept mean columns.
    pub fn mean_predictors(&self) -> Vec<usize> {
        self.mean.iter().copied().filter(|&j| Some(j) != self.intercept_mean).collect()
    }

    pub fn var_predictors(&self) -> Vec<usize> {
        self.var.iter().copied().filter(|&j| Some(j) != self.intercept_var).collect()
    }

    /// Number of non-intercept mean columns in the universe.
    pub fn mean_universe(&self) -> usize {
        self.p - usize::from(self.intercept_mean.is_some())
    }

    pub fn var_universe(&self) -> usize {
        self.q - usize::from(self.intercept_var.is_some())
    }

    pub fn mean_add_candidates(&self) -> Vec<usize> {
        (0..self.p)
            .filter(|j| Some(*j) != self.intercept_mean && self.mean.binary_search(j).is_err())
            .collect()
    }

    pub fn var_add_candidates(&self) -> Vec<usize> {
        (0..self.q)
            .filter(|j| Some(*j) != self.intercept_var && self.var.binary_search(j).is_err())
            .collect()
    }

    pub fn contains_mean(&self, j: usize) -> bool {
        self.mean.binary_search(&j).is_ok()
    }

    pub fn contains_var(&self, j: usize) -> bool {
        self.var.binary_search(&j).is_ok()
    }

    /// `V \ {intercept}` is a subset of `C \ {intercept}`.
    pub fn var_within_mean(&self) -> bool {
        self.var_predictors().iter().all(|&j| self.contains_mean(j))
    }
}

/// Everything needed to fit and score a model during the search.
#[derive(Debug, Clone)]
pub struct SearchContext<'a> {
    pub data: &'a DesignData,
    pub prior: IsotropicPrior,
    pub policy: ModelPriorPolicy,
    pub config: SolverConfig,
}

/// A fitted model with the per-observation quantities the ranking scores reuse.
#[derive(Debug, Clone)]
pub struct SelectionState {
    pub index: ModelIndex,
    pub fit: VariationalFit,
    pub trace: FitTrace,
    /// Prior variances in force for this fit (updated when shrinkage is on).
    pub sigma2_beta: f64,
    pub sigma2_alpha: f64,
    pub log_prior: f64,
    /// `y_i - x_{C,i}^T mu_beta`
    pub residual: DVector<f64>,
    /// `x_{C,i}^T Sigma_beta x_{C,i}`
    pub mean_var: DVector<f64>,
    /// Unclipped `z_{V,i}^T mu_alpha - z_{V,i}^T Sigma_alpha z_{V,i} / 2`.
    pub exponent: DVector<f64>,
}

impl SelectionState {
    /// Exact bound plus log model prior.
    pub fn score(&self) -> f64 {
        self.fit.elbo + self.log_prior
    }

    /// `w_i = r_i^2 + x_i^T Sigma_beta x_i`
    pub fn w(&self) -> DVector<f64> {
        self.residual.zip_map(&self.mean_var, |r, s| r * r + s)
    }

    /// Full-length mean coefficients, zero for inactive columns.
    pub fn mean_coefficients(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.index.p];
        for (k, &j) in self.index.mean.iter().enumerate() {
            out[j] = self.fit.mu_beta[k];
        }
        out
    }

    pub fn var_coefficients(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.index.q];
        for (k, &j) in self.index.var.iter().enumerate() {
            out[j] = self.fit.mu_alpha[k];
        }
        out
    }
}

impl<'a> SearchContext<'a> {
    pub fn new(
        data: &'a DesignData,
        prior: IsotropicPrior,
        policy: ModelPriorPolicy,
        config: SolverConfig,
    ) -> Result<Self> {
        prior.validate()?;
        policy.validate(data)?;
        config.validate()?;
        Ok(Self { data, prior, policy, config })
    }

    pub fn clip(&self, e: f64) -> f64 {
        self.config.clip(e)
    }

    /// Fits the model `index` from scratch with the isotropic prior.
    pub fn fit_model(&self, index: ModelIndex) -> Result<SelectionState> {
        if index.mean.is_empty() || index.var.is_empty() {
            return Err(Error::Contract("mean and variance models need at least one column".into()));
        }
        let md = self.data.model_data(&index.mean, &index.var);
        let prior = PriorSpec::isotropic(index.mean.len(), index.var.len(), self.prior)?;
        let out = fit_vb_full(&md, &prior, &self.config)?;
        let iso = *out.prior.isotropic_params().expect("isotropic prior");
        let moments = ObservationMoments::new(&md, &out.fit, &self.config);
        let zsz = row_quad_forms(&md.z, &out.fit.sigma_alpha);
        let exponent = moments.z_mu.zip_map(&zsz, |m, s| m - 0.5 * s);
        let log_prior = model_log_prior(&index, &self.policy);
        Ok(SelectionState {
            log_prior,
            sigma2_beta: iso.sigma2_beta,
            sigma2_alpha: iso.sigma2_alpha,
            residual: moments.residual,
            mean_var: moments.mean_var,
            exponent,
            index,
            fit: out.fit,
            trace: out.trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn data() -> DesignData {
        let n = 6;
        let x = DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { ((i * j) % 5) as f64 });
        DesignData::new(
            DVector::from_fn(n, |i, _| i as f64),
            x.clone(),
            x,
            (0..4).map(|j| format!("c{j}")).collect(),
            (0..4).map(|j| format!("c{j}")).collect(),
            Some(0),
            Some(0),
        )
        .unwrap()
    }

    #[test]
    fn index_bookkeeping() {
        let d = data();
        let idx = ModelIndex::intercepts_only(&d);
        assert_eq!(idx.mean_add_candidates(), vec![1, 2, 3]);
        let idx = idx.with_mean(3).with_mean(1).with_var(3);
        assert_eq!(idx.mean, vec![0, 1, 3]);
        assert_eq!(idx.mean_predictors(), vec![1, 3]);
        assert!(idx.var_within_mean());
        assert!(!idx.without_mean(3).var_within_mean());
        assert_eq!(idx.mean_universe(), 3);
    }
}
