//! Covariance estimators, marginal effects, optimal levels and
//! annualization of multi-year effects.

mod annualize;
mod margins;
mod vcov;

pub use annualize::{annualize, annualize_decadal, deannualize, Convention};
pub use margins::{
    critical_value, evaluate_curve, marginal_effect, optimal_level, EffectKind, EffectTerm,
    MarginSpec, MarginalCurve, Optimum, QuadraticResponse,
};
pub use vcov::{
    cluster_meat, sandwich, scores, vcov, vcov_classical, vcov_cluster, vcov_cluster_codes,
    vcov_hac, vcov_robust, vcov_twoway,
};
