#![allow(dead_code)]

use std::collections::BTreeMap;

use climecon::estimator::FeTerm;
use climecon::panel::{PanelRow, RegionPanel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random unbalanced panel with columns y, x1, x2, x3 and w.
pub fn random_panel(rng: &mut impl Rng, regions: usize, years: usize, keep: f64) -> RegionPanel {
    let mut rows = Vec::new();
    for r in 0..regions {
        let country = format!("C{}", r % 4);
        let continent = format!("K{}", r % 2);
        for t in 0..years {
            if rng.random::<f64>() > keep && t > 0 {
                continue;
            }
            let mut values = BTreeMap::new();
            for name in ["y", "x1", "x2", "x3"] {
                values.insert(name.to_string(), normal(rng) * 2.0 + 1.0);
            }
            values.insert("w".into(), 0.2 + rng.random::<f64>());
            rows.push(PanelRow {
                region: format!("R{r:02}"),
                country: country.clone(),
                continent: continent.clone(),
                time: 2000 + t as i32,
                values,
            });
        }
    }
    RegionPanel::from_rows(rows, "year").unwrap()
}

/// Dummy and polynomial-trend columns spanning `terms` on `panel`.
pub fn dummy_columns(panel: &RegionPanel, terms: &[FeTerm]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let t0 = panel.time_levels()[0] as f64;
    for term in terms {
        let codes = panel.factor_codes(&term.grouping()).unwrap();
        let levels = codes.iter().copied().max().map_or(0, |m| m as usize + 1);
        for level in 0..levels {
            for power in 0..=term.degree() as i32 {
                out.push(
                    (0..panel.len())
                        .map(|i| {
                            if codes[i] as usize == level {
                                (panel.time()[i] as f64 - t0).powi(power)
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                );
            }
        }
    }
    out
}

pub struct DenseFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub rank: usize,
}

/// Weighted least squares of `y` on `[x, dummies]` by SVD pseudo-inverse.
/// Coefficients are returned for the `x` columns only.
pub fn dense_wls(y: &[f64], x: &[Vec<f64>], dummies: &[Vec<f64>], w: &[f64]) -> DenseFit {
    let n = y.len();
    let cols: Vec<&Vec<f64>> = x.iter().chain(dummies.iter()).collect();
    let k = cols.len();
    let a = DMatrix::from_fn(n, k, |i, j| cols[j][i] * w[i].sqrt());
    let b = DVector::from_fn(n, |i, _| y[i] * w[i].sqrt());
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-11;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let mut beta = svd.solve(&b, tol).unwrap();
    // Iterative refinement on the normal equations.
    for _ in 0..3 {
        let r = a.transpose() * (&b - &a * &beta);
        let g = a.transpose() * &a;
        let gs = g.clone().svd(true, true);
        let gt = gs.singular_values.max() * 1e-13;
        beta += gs.solve(&r, gt).unwrap();
    }
    let fitted = (0..n).map(|i| (0..k).map(|j| cols[j][i] * beta[j]).sum()).collect();
    DenseFit { coefficients: beta.iter().take(x.len()).copied().collect(), fitted, rank }
}
