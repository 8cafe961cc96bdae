//! Bayesian P-spline regression with smooth subspace shrinkage.
//!
//! Each smooth effect is a cubic B-spline whose coefficients carry a prior
//! that penalizes (a) the distance of the fitted curve from a user-chosen
//! parametric null space, scaled by a horseshoe-type local scale `lambda`,
//! and (b) second differences of the coefficients, scaled by `tau`.
//! The numeric kernels (`linalg`, `spline`, `subspace`, `prior`) are generic
//! over [`Real`]; the sampler and model layers run in `f64`.

pub mod error;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod prior;
pub mod quadrature;
pub mod scalar;
pub mod spline;
pub mod stats;
pub mod study;
pub mod subspace;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type SymMatrix = linalg::SymMatrix<f64>;
pub type SplineBasis = spline::SplineBasis<f64>;
pub type Subspace = subspace::Subspace<f64>;
pub type ProjectionPair = subspace::ProjectionPair<f64>;
pub type TermPrecisionInputs = prior::TermPrecisionInputs<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type SymMatrix32 = linalg::SymMatrix<f32>;
pub type SplineBasis32 = spline::SplineBasis<f32>;
