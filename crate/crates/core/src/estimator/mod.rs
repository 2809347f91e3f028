//! Weighted least squares with high-dimensional fixed effects.
//!
//! Fixed effects are never materialized as dummy columns: the response and
//! regressors are residualized against them by alternating projections
//! ([`absorb`]), and the remaining small problem is solved by pivoted QR,
//! which also detects and drops collinear regressors.

pub(crate) mod absorb;
mod fit;
mod spec;

pub use absorb::{
    absorb, AbsorbOptions, AbsorbStats, Absorber, FeTerm, Projector, TermCodes,
};
pub use fit::{
    fit, fit_binned, fit_heterogeneous, fit_with, BinReference, CoefficientRow, FePartition,
    FitResult, FitSummary,
};
pub use spec::{HacKind, Interaction, RegressionSpec, VcovKind, VcovSpec, WeightSpec};
