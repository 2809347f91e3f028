//! Sandwich covariance estimators for a fitted regression.
//!
//! With absorbed design X̃, weights w and residuals e, row i contributes the
//! score u_i = w_i e_i x̃_i and every estimator is B M B with bread
//! B = (X̃'WX̃)⁻¹ and a meat M built from the scores.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimator::absorb::is_nested;
use crate::estimator::{FitResult, HacKind, VcovKind, VcovSpec};
use crate::linalg::{floor_eigenvalues, Matrix};
use crate::panel::dense_codes;
use crate::scalar::Scalar;

/// Covariance of `fit` under `spec`, plus a note when a repair was applied.
pub fn vcov<S: Scalar>(fit: &FitResult<S>, spec: &VcovSpec) -> Result<(Matrix<S>, Option<String>)> {
    let ss = spec.small_sample;
    match &spec.kind {
        VcovKind::Classical => Ok((vcov_classical(fit), None)),
        VcovKind::Robust => Ok((vcov_robust(fit, ss), None)),
        VcovKind::Cluster { factor } => Ok((vcov_cluster(fit, factor, ss)?, None)),
        VcovKind::TwoWay { factor_a, factor_b } => {
            let (v, floored) = vcov_twoway(fit, factor_a, factor_b, ss)?;
            let note = (floored > 0).then(|| {
                format!("two-way covariance was indefinite; {floored} eigenvalue(s) floored at 0")
            });
            Ok((v, note))
        }
        VcovKind::Hac { bandwidth, estimator } => {
            Ok((vcov_hac(fit, *bandwidth, *estimator, ss)?, None))
        }
    }
}

/// Scores u_i = w_i e_i x̃_i as an n × k matrix.
pub fn scores<S: Scalar>(fit: &FitResult<S>) -> Matrix<S> {
    let k = fit.design.ncols();
    let mut u = Matrix::zeros(fit.n, k);
    for j in 0..k {
        let x = fit.design.col(j);
        let col = u.col_mut(j);
        for i in 0..x.len() {
            col[i] = fit.weights[i] * fit.residuals[i] * x[i];
        }
    }
    u
}

/// B M B.
pub fn sandwich<S: Scalar>(bread: &Matrix<S>, meat: &Matrix<S>) -> Matrix<S> {
    let mut v = bread.matmul(meat).matmul(bread);
    v.symmetrize();
    v
}

/// Σ_g s_g s_g' where s_g sums the score rows of group g.
pub fn cluster_meat<S: Scalar>(scores: &Matrix<S>, groups: &[u32]) -> Matrix<S> {
    let k = scores.ncols();
    let g = groups.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut sums = Matrix::zeros(g, k);
    for j in 0..k {
        let s = scores.col(j);
        let out = sums.col_mut(j);
        for (i, &c) in groups.iter().enumerate() {
            out[c as usize] = out[c as usize] + s[i];
        }
    }
    sums.transpose().matmul(&sums)
}

/// σ̂² (X̃'WX̃)⁻¹ with σ̂² = Σ w e² / dof.
pub fn vcov_classical<S: Scalar>(fit: &FitResult<S>) -> Matrix<S> {
    let rss: S = fit.residuals.iter().zip(&fit.weights).map(|(&e, &w)| w * e * e).sum();
    let sigma2 = rss / S::from_usize_lossy(fit.dof);
    fit.bread.scale(sigma2)
}

/// HC1: N/(N−K) B (Σ u_i u_i') B.
pub fn vcov_robust<S: Scalar>(fit: &FitResult<S>, small_sample: bool) -> Matrix<S> {
    let u = scores(fit);
    let meat = u.transpose().matmul(&u);
    let mut v = sandwich(&fit.bread, &meat);
    if small_sample {
        let n = S::from_usize_lossy(fit.n);
        let k = S::from_usize_lossy(fit.n_params());
        v = v.scale(n / (n - k));
    }
    v
}

/// Parameters entering the CR1 factor: absorbed terms whose groups nest
/// inside the clusters do not count.
fn cluster_params<S: Scalar>(fit: &FitResult<S>, clusters: &[u32]) -> usize {
    let nested: usize =
        fit.fe.iter().filter(|f| is_nested(&f.groups, clusters)).map(|f| f.params).sum();
    fit.rank + fit.absorbed_params.saturating_sub(nested)
}

fn cr1_factor<S: Scalar>(n: usize, k: usize, g: usize) -> S {
    let (n, k, g) = (S::from_usize_lossy(n), S::from_usize_lossy(k), S::from_usize_lossy(g));
    g / (g - S::one()) * (n - S::one()) / (n - k)
}

/// Clustered sandwich on explicit cluster codes.
pub fn vcov_cluster_codes<S: Scalar>(
    fit: &FitResult<S>,
    clusters: &[u32],
    small_sample: bool,
) -> Result<Matrix<S>> {
    let codes = dense_codes(clusters);
    let g = codes.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    if g < 2 {
        return Err(Error::InsufficientData(format!(
            "clustered covariance needs at least 2 clusters, found {g}"
        )));
    }
    let meat = cluster_meat(&scores(fit), &codes);
    let v = sandwich(&fit.bread, &meat);
    Ok(if small_sample {
        v.scale(cr1_factor(fit.n, cluster_params(fit, &codes), g))
    } else {
        v
    })
}

/// One-way clustered covariance (CR1) on a factor of the estimation sample.
pub fn vcov_cluster<S: Scalar>(
    fit: &FitResult<S>,
    factor: &str,
    small_sample: bool,
) -> Result<Matrix<S>> {
    vcov_cluster_codes(fit, &fit.sample.factor_codes(factor)?, small_sample)
}

/// V(a) + V(b) − V(a∩b), each term with its own CR1 factor. Negative
/// eigenvalues are floored at zero; the count of floored eigenvalues is
/// returned alongside.
pub fn vcov_twoway<S: Scalar>(
    fit: &FitResult<S>,
    factor_a: &str,
    factor_b: &str,
    small_sample: bool,
) -> Result<(Matrix<S>, usize)> {
    let a = fit.sample.factor_codes(factor_a)?;
    let b = fit.sample.factor_codes(factor_b)?;
    for (name, codes) in [(factor_a, &a), (factor_b, &b)] {
        if codes.iter().all(|&c| c == codes[0]) {
            return Err(Error::InsufficientData(format!(
                "two-way clustering needs at least 2 levels of {name}"
            )));
        }
    }
    let ab: Vec<(u32, u32)> = a.iter().copied().zip(b.iter().copied()).collect();
    let ab = dense_codes(&ab);
    let va = vcov_cluster_codes(fit, &a, small_sample)?;
    let vb = vcov_cluster_codes(fit, &b, small_sample)?;
    let n_ab = ab.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let vab = if n_ab >= 2 {
        vcov_cluster_codes(fit, &ab, small_sample)?
    } else {
        Matrix::zeros(va.nrows(), va.ncols())
    };
    let mut v = va.add(&vb).sub(&vab);
    v.symmetrize();
    let (v, floored) = floor_eigenvalues(&v);
    if floored > 0 {
        log::warn!("two-way covariance indefinite; {floored} eigenvalue(s) floored at 0");
    }
    Ok((v, floored))
}

/// Bartlett-kernel HAC covariance with bandwidth `bandwidth` over the
/// time index of the estimation sample.
///
/// Driscoll-Kraay sums scores within each period and applies the kernel to
/// the resulting time series; at bandwidth 0 it equals clustering by
/// period. Panel Newey-West applies the kernel within each region; at
/// bandwidth 0 it equals the heteroskedasticity-robust estimator.
pub fn vcov_hac<S: Scalar>(
    fit: &FitResult<S>,
    bandwidth: usize,
    kind: HacKind,
    small_sample: bool,
) -> Result<Matrix<S>> {
    let time = fit.sample.time();
    let levels = fit.sample.time_levels();
    let t_count = levels.len();
    if bandwidth >= t_count {
        return Err(Error::InvalidInput(format!(
            "HAC bandwidth {bandwidth} must be below the number of periods {t_count}"
        )));
    }
    if kind == HacKind::DriscollKraay && t_count < 2 {
        return Err(Error::InsufficientData("Driscoll-Kraay covariance needs at least 2 periods".into()));
    }
    let u = scores(fit);
    let k = u.ncols();
    let kernel = |lag: usize| S::one() - S::from_usize_lossy(lag) / S::from_usize_lossy(bandwidth + 1);
    let mut meat = Matrix::zeros(k, k);
    let add_cross = |meat: &mut Matrix<S>, a: &[S], b: &[S], w: S| {
        for r in 0..k {
            for c in 0..k {
                meat[(r, c)] = meat[(r, c)] + w * (a[r] * b[c] + b[r] * a[c]);
            }
        }
    };
    let row = |i: usize| -> Vec<S> { (0..k).map(|j| u[(i, j)]).collect() };
    match kind {
        HacKind::DriscollKraay => {
            let mut by_time: BTreeMap<i32, Vec<S>> = BTreeMap::new();
            for i in 0..fit.n {
                let h = by_time.entry(time[i]).or_insert_with(|| vec![S::zero(); k]);
                for j in 0..k {
                    h[j] = h[j] + u[(i, j)];
                }
            }
            for h in by_time.values() {
                add_cross(&mut meat, h, h, S::lit(0.5));
            }
            for lag in 1..=bandwidth {
                let w = kernel(lag);
                for (t, h) in &by_time {
                    if let Some(prev) = by_time.get(&(t - lag as i32)) {
                        add_cross(&mut meat, h, prev, w);
                    }
                }
            }
        }
        HacKind::PanelNeweyWest => {
            let sample = &fit.sample;
            for i in 0..fit.n {
                let ui = row(i);
                add_cross(&mut meat, &ui, &ui, S::lit(0.5));
                for lag in 1..=bandwidth {
                    if let Some(j) = sample.lag_index(i, lag as i32) {
                        add_cross(&mut meat, &ui, &row(j), kernel(lag));
                    }
                }
            }
        }
    }
    let v = sandwich(&fit.bread, &meat);
    if !small_sample {
        return Ok(v);
    }
    let factor = match kind {
        HacKind::DriscollKraay => {
            let codes = fit.sample.factor_codes(fit.sample.time_name())?;
            cr1_factor(fit.n, cluster_params(fit, &codes), t_count)
        }
        HacKind::PanelNeweyWest => {
            let n = S::from_usize_lossy(fit.n);
            n / (n - S::from_usize_lossy(fit.n_params()))
        }
    };
    Ok(v.scale(factor))
}
