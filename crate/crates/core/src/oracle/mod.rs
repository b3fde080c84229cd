//! Independent reference computations used to check the fitting and
//! selection code: Monte Carlo bound estimates, quadrature evidence,
//! exhaustive model search and simple numerical derivatives and maximizers.
//!
//! Apart from shared data types these do not reuse the code paths they check.

mod exhaustive;
mod mc;
mod numeric;
mod quadrature;
mod report;

pub use exhaustive::{exhaustive_search, ExhaustiveResult, MAX_EXHAUSTIVE_UNIVERSE};
pub use mc::{mc_elbo_oracle, mc_elbo_terms, McEstimate};
pub use numeric::{finite_diff_grad, finite_diff_grad_richardson, grid_max_1d, grid_max_2d};
pub use quadrature::{
    gauss_hermite, log_evidence_quadrature, log_evidence_quadrature_detailed, log_joint_density,
    QuadratureResult, MAX_QUADRATURE_DIM, QUADRATURE_TOL,
};
pub use report::{write_reports_csv, OracleReport};
