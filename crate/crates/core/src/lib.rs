pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod ingest;
pub mod linalg;
pub mod panel;
pub mod project;
pub mod resample;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type FitResult = estimator::FitResult<f64>;
pub type FitResult32 = estimator::FitResult<f32>;
pub type MarginalCurve = inference::MarginalCurve<f64>;
