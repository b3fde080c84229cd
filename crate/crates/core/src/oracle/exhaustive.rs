use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DesignData;
use crate::error::{Error, Result};
use crate::fit::SolverConfig;
use crate::prior::IsotropicPrior;
use crate::selection::{ModelIndex, ModelPriorPolicy, SearchContext};

/// Largest number of non-intercept candidates (mean plus variance) enumerated.
pub const MAX_EXHAUSTIVE_UNIVERSE: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub best: ModelIndex,
    pub best_score: f64,
    /// Every model with its bound plus log prior, in enumeration order.
    pub scores: Vec<(ModelIndex, f64)>,
}

fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (0..1usize << items.len())
        .map(|mask| items.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| j).collect())
        .collect()
}

/// Fits every (mean set, variance set) pair and returns the maximizer of the
/// bound plus log model prior. Ties keep the first model in enumeration order.
pub fn exhaustive_search(
    data: &DesignData,
    prior: IsotropicPrior,
    policy: &ModelPriorPolicy,
    config: &SolverConfig,
    max_universe: usize,
) -> Result<ExhaustiveResult> {
    let start = ModelIndex::intercepts_only(data);
    let mean = start.mean_add_candidates();
    let var = start.var_add_candidates();
    let size = mean.len() + var.len();
    if max_universe > MAX_EXHAUSTIVE_UNIVERSE || size > max_universe {
        return Err(Error::Unsupported(format!(
            "{size} candidates exceed the exhaustive limit {}",
            max_universe.min(MAX_EXHAUSTIVE_UNIVERSE)
        )));
    }
    let ctx = SearchContext::new(data, prior, policy.clone(), *config)?;
    let mut models = Vec::new();
    for c in subsets(&mean) {
        for v in subsets(&var) {
            models.push(ModelIndex::with_sets(data, &c, &v)?);
        }
    }
    let scores: Vec<(ModelIndex, f64)> = models
        .into_par_iter()
        .map(|m| ctx.fit_model(m.clone()).map(|s| (m, s.score())))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, (_, s)) in scores.iter().enumerate() {
        if *s > scores[best].1 {
            best = k;
        }
    }
    Ok(ExhaustiveResult { best: scores[best].0.clone(), best_score: scores[best].1, scores })
}
