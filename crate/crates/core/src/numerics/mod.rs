//! Regression and optimisation kernels shared by the estimators.
//!
//! Everything here is a pure function of its arguments.

mod cluster;
mod fixed_effects;
mod logit;
mod nls;
mod ols;
mod ridge;
mod simplex;

pub use cluster::{cluster_robust_vcov, ClusterSpec, CovarianceKind};
pub use fixed_effects::{absorb_two_way, two_way_effects, TwoWayEffects};
pub use logit::logistic_fit;
pub(crate) use logit::predict as logistic_predict;
pub use nls::{nls_fit, NlsFit, NlsOptions};
pub use ols::{ols, FitResult};
pub use ridge::ridge;
pub use simplex::{pooled_simplex_weights, project_simplex, simplex_weights, PooledProblem, SimplexSolution};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("design has zero rows")]
    Empty,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },
    #[error("simplex weights did not converge: KKT residual {residual:.3e} after {iterations} iterations")]
    SimplexNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("nonlinear least squares did not converge after {iterations} iterations")]
    NlsNotConverged { iterations: usize, trace: Vec<f64> },
    #[error(
        "jacobian disagrees with finite differences at residual {row}, parameter {col}: analytic {analytic}, numeric {numeric}"
    )]
    JacobianMismatch {
        row: usize,
        col: usize,
        analytic: f64,
        numeric: f64,
    },
    #[error("cluster-robust variance needs at least two clusters")]
    SingleCluster,
    #[error("perfect separation detected in logistic regression; drop the covariate")]
    Separation,
    #[error("response must be binary (0/1)")]
    NonBinary,
    #[error("singular system: {0}")]
    Singular(&'static str),
}
