//! Structural regularization: statistical models shrunk toward the parameter
//! values implied by an estimated structural model, plus the Monte Carlo
//! harness used to compare statistical, structural and regularized
//! estimators on auction, dynamic entry/exit and IV demand problems.
//!
//! The estimator proceeds in two stages. A structural model is estimated on
//! one part of the data and used to generate synthetic data, to which the
//! statistical model `g(x; θ)` is fitted to obtain `θ^M`. The statistical
//! model is then re-estimated on the other part of the data with a penalty
//! `λ Σ w_j (θ_j - θ^M_j)²`, and `λ` is chosen by cross-validation.

pub mod apps;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod numerics;
pub mod regularize;
pub mod stats;
pub mod tuning;

pub use data::{Dataset, DomainSpec, SeededRng, StandardizeTransform};
pub use error::{Result, SreError};
pub use regularize::{
    ate_from_fit, fit_theta_m, sre_extremum, sre_gmm, sre_ridge, Basis, GSpec, PenaltySpec,
    SreFit, StructuralBenchmark, StructuralFamily,
};
pub use stats::{fit_2sls, fit_arx, fit_arx_aic, fit_ols, fit_polynomial, select_degree_aic, ArxFit, LinearFit, PolyFit};
pub use tuning::{CvKind, CvPlan, CvTrace};
