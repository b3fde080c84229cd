//! Variational Bayes for heteroscedastic linear regression, with greedy
//! ranking-based selection of the mean and variance models.

pub mod bound;
pub mod data;
pub mod datasets;
pub mod error;
pub mod fit;
pub mod homoscedastic;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod prior;
pub mod selection;
pub mod simulate;
pub mod vb;

pub use bound::{elbo, elbo_terms, ElboTerms};
pub use data::{standardize, validate_dataset, ColumnRoles, DesignData, ModelData, ScalingInfo, StandardizePolicy, Table};
pub use error::{Error, Result};
pub use fit::{SolverConfig, VariationalFit};
pub use prior::{IsotropicPrior, PriorSpec};
pub use selection::{
    forward_backward_var, forward_var, model_log_prior, ModelIndex, ModelPriorPolicy, NewtonStats, RankScore,
    SelectionConfig, SelectionResult,
};
pub use vb::{fit_vb, fit_vb_full, FitTrace};
