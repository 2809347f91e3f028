//! Country-block bootstrap and the distribution of the adaptation ratio.
//!
//! Replicate r draws countries with a ChaCha8 generator seeded with the
//! master seed and switched to stream r, so each replicate is reproducible
//! on its own and replicates can run in any order or in parallel.

mod adaptation;
mod bootstrap;

pub use adaptation::{adaptation_ratio, adaptation_ratios, ratio_value, AdaptationSummary};
pub use bootstrap::{
    block_bootstrap, block_bootstrap_with, country_universe, draw_countries, paired_bootstrap,
    resample_countries, BootstrapOptions, BootstrapRun, BootstrapSummary, CoefficientDraws, Failure,
    IntervalSummary, Resampling,
};

/// Linearly interpolated quantile of ascending `sorted` data at `p` ∈ [0, 1]
/// (position p·(n−1)).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

/// Sorted copy of the finite values in `values`.
pub fn sorted_finite(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-15);
        assert!(quantile(&[], 0.5).is_nan());
        assert_eq!(sorted_finite(&[3.0, f64::NAN, 1.0]), vec![1.0, 3.0]);
    }
}
