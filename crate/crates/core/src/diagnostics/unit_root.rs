use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use super::{std_normal, TestOptions, TestReport};
use crate::error::{Error, Result};
use crate::panel::RegionPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnitRootOptions {
    /// Unit-specific linear trends in addition to unit intercepts.
    pub trend: bool,
    /// Subtract the cross-sectional mean at each period first.
    pub cross_demean: bool,
}

/// Mean and variance of the pooled within estimator of the autoregressive
/// coefficient under the unit-root null, for `t` regression periods.
/// The variance is that of √N(ρ̂ − mean).
pub fn null_moments(t: usize, trend: bool) -> (f64, f64) {
    let t = t as f64;
    if trend {
        let mean = 1.0 - 15.0 / (2.0 * (t + 2.0));
        let var = 15.0 * (193.0 * t * t - 728.0 * t + 1147.0)
            / (112.0 * (t + 2.0).powi(3) * (t - 2.0));
        (mean, var)
    } else {
        let mean = 1.0 - 3.0 / (t + 1.0);
        let var = 3.0 * (17.0 * t * t - 20.0 * t + 17.0) / (5.0 * (t - 1.0) * (t + 1.0).powi(3));
        (mean, var)
    }
}

/// Largest balanced block of `series` over consecutive periods: the window
/// and the units observed throughout it, maximizing units × transitions.
/// Ties go to the earlier window.
pub fn balanced_window(series: &BTreeMap<String, BTreeMap<i32, f64>>) -> Option<(i32, i32, Vec<String>)> {
    let mut years: Vec<i32> = series.values().flat_map(|s| s.keys().copied()).collect();
    years.sort_unstable();
    years.dedup();
    let mut best: Option<(usize, i32, i32, Vec<String>)> = None;
    for (a, &start) in years.iter().enumerate() {
        for &end in &years[a + 1..] {
            let units: Vec<String> = series
                .iter()
                .filter(|(_, s)| (start..=end).all(|y| s.contains_key(&y)))
                .map(|(k, _)| k.clone())
                .collect();
            let score = units.len() * (end - start) as usize;
            if units.is_empty() {
                break;
            }
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, start, end, units));
            }
        }
    }
    best.map(|(_, a, b, u)| (a, b, u))
}

/// Harris-Tzavalis test on `variable`, run on the largest balanced
/// sub-panel over consecutive periods.
pub fn harris_tzavalis(
    panel: &RegionPanel,
    variable: &str,
    options: UnitRootOptions,
) -> Result<TestReport> {
    let values = panel.column(variable)?;
    let mut series: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
    for i in 0..panel.len() {
        if values[i].is_finite() {
            series.entry(panel.region()[i].clone()).or_default().insert(panel.time()[i], values[i]);
        }
    }
    let (start, end, units) = balanced_window(&series)
        .ok_or_else(|| Error::InsufficientData(format!("no balanced block for {variable}")))?;
    let dropped = series.len() - units.len();
    log::info!(
        "unit-root test on {variable}: {} units over {start}..={end}, {dropped} unit(s) outside the balanced block",
        units.len()
    );
    let matrix: Vec<Vec<f64>> =
        units.iter().map(|u| (start..=end).map(|y| series[u][&y]).collect()).collect();
    harris_tzavalis_balanced(&matrix, options)
}

/// Harris-Tzavalis test on a balanced block; each inner vector is one
/// unit's series over consecutive periods.
pub fn harris_tzavalis_balanced(series: &[Vec<f64>], options: UnitRootOptions) -> Result<TestReport> {
    let n = series.len();
    let len = series.first().map_or(0, Vec::len);
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidInput("unit-root test needs a balanced block".into()));
    }
    let t = len.saturating_sub(1);
    if t < 3 {
        return Err(Error::InsufficientData(format!(
            "unit-root test needs at least 3 transitions per unit, found {t}"
        )));
    }
    if n < 10 {
        log::warn!("unit-root test on only {n} units; the fixed-T asymptotics assume many");
    }
    let mut data: Vec<Vec<f64>> = series.to_vec();
    if options.cross_demean {
        for p in 0..len {
            let mean = data.iter().map(|s| s[p]).sum::<f64>() / n as f64;
            for s in data.iter_mut() {
                s[p] -= mean;
            }
        }
    }
    let basis = within_basis(t, options.trend);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut scale = 0.0f64;
    for s in &data {
        let y = residualize(&s[1..], &basis);
        let lag = residualize(&s[..t], &basis);
        num += y.iter().zip(&lag).map(|(a, b)| a * b).sum::<f64>();
        den += lag.iter().map(|v| v * v).sum::<f64>();
        scale = scale.max(s.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    if !(den > 1e-24 * (scale * scale).max(f64::MIN_POSITIVE) * (n * t) as f64) {
        return Err(Error::Degenerate(
            "lagged series has no variation within units".into(),
        ));
    }
    let rho = num / den;
    let (mean, var) = null_moments(t, options.trend);
    let z = (n as f64).sqrt() * (rho - mean) / var.sqrt();
    Ok(TestReport {
        test: "harris_tzavalis".into(),
        statistic: z,
        p_value: std_normal().cdf(z),
        null_hypothesis: "all panels contain unit roots".into(),
        estimate: Some(rho),
        units: n,
        periods: t,
        options: TestOptions {
            trend: Some(options.trend),
            cross_demean: Some(options.cross_demean),
            order: None,
        },
    })
}

/// Orthonormal basis of the unit-level deterministic terms over `t` points.
fn within_basis(t: usize, trend: bool) -> Vec<Vec<f64>> {
    let c = 1.0 / (t as f64).sqrt();
    let mut out = vec![vec![c; t]];
    if trend {
        let mid = (t as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..t).map(|i| i as f64 - mid).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.push(raw.into_iter().map(|v| v / norm).collect());
    }
    out
}

fn residualize(x: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = x.to_vec();
    for b in basis {
        let c: f64 = r.iter().zip(b).map(|(a, b)| a * b).sum();
        for (v, bv) in r.iter_mut().zip(b) {
            *v -= c * bv;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_drift_gives_unit_coefficient() {
        let series: Vec<Vec<f64>> =
            (0..12).map(|i| (0..8).map(|t| 3.0 + (i as f64 + 1.0) * 0.5 * t as f64).collect()).collect();
        let r = harris_tzavalis_balanced(&series, UnitRootOptions::default()).unwrap();
        assert!((r.estimate.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_units_are_degenerate() {
        let series: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64; 6]).collect();
        assert!(matches!(
            harris_tzavalis_balanced(&series, UnitRootOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_periods() {
        let series = vec![vec![1.0, 2.0, 4.0]; 20];
        assert!(harris_tzavalis_balanced(&series, UnitRootOptions::default()).is_err());
    }

    #[test]
    fn window_prefers_more_data() {
        let mut s: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
        for u in ["a", "b", "c"] {
            s.insert(u.into(), (2000..2010).map(|y| (y, 1.0)).collect());
        }
        s.get_mut("c").unwrap().remove(&2009);
        s.insert("d".into(), (2000..2003).map(|y| (y, 1.0)).collect());
        let (a, b, units) = balanced_window(&s).unwrap();
        assert_eq!((a, b), (2000, 2008));
        assert_eq!(units, vec!["a", "b", "c"]);
    }

    #[test]
    fn moments_shrink_with_length() {
        let (m5, v5) = null_moments(5, false);
        let (m50, v50) = null_moments(50, false);
        assert!(m5 < m50 && m50 < 1.0);
        assert!(v50 < v5);
        let (mt, _) = null_moments(26, true);
        assert!(mt < null_moments(26, false).0);
    }
}
