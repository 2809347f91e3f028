//! Bias-corrected LM test for serial correlation in fixed-effects residuals.
//!
//! Within-demeaned residuals of a unit with T observations have covariance
//! −σ²/T at every lag under the null, so the raw product e_t e_{t−k} is
//! biased. Adding e_t²/(T−1) removes the bias: each unit contributes
//! s_i = Σ_t e_t (e_{t−k} + e_t/(T−1)), and the statistic Σ s_i / √(Σ s_i²)
//! is asymptotically standard normal and robust to heteroskedasticity
//! across units.

use statrs::distribution::ContinuousCDF;

use super::{std_normal, TestOptions, TestReport};
use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::panel::RegionPanel;

/// Test on the residuals of a fitted model.
pub fn lm_serial(fit: &FitResult<f64>, order: usize) -> Result<TestReport> {
    lm_serial_residuals(&fit.sample, &fit.residuals, order)
}

/// Test on residuals aligned with the rows of `panel`.
pub fn lm_serial_residuals(panel: &RegionPanel, residuals: &[f64], order: usize) -> Result<TestReport> {
    if residuals.len() != panel.len() {
        return Err(Error::InvalidInput(format!(
            "{} residuals for {} panel rows",
            residuals.len(),
            panel.len()
        )));
    }
    let periods = panel.time_levels().len();
    check_order(order, periods)?;
    let time = panel.time();
    let mut contributions = Vec::new();
    for block in panel.region_blocks() {
        let t_i = block.len();
        if t_i <= order + 1 {
            continue;
        }
        let corr = 1.0 / (t_i as f64 - 1.0);
        let mut s = 0.0;
        let mut any = false;
        for row in block.clone() {
            if let Some(j) = panel.lag_index(row, order as i32) {
                debug_assert_eq!(time[row] - time[j], order as i32);
                s += residuals[row] * (residuals[j] + corr * residuals[row]);
                any = true;
            }
        }
        if any {
            contributions.push(s);
        }
    }
    finish(&contributions, order, periods)
}

/// Test on one consecutive residual series per unit.
pub fn lm_serial_series(series: &[Vec<f64>], order: usize) -> Result<TestReport> {
    let periods = series.iter().map(Vec::len).max().unwrap_or(0);
    check_order(order, periods)?;
    let contributions: Vec<f64> = series
        .iter()
        .filter(|e| e.len() > order + 1)
        .map(|e| {
            let corr = 1.0 / (e.len() as f64 - 1.0);
            (order..e.len()).map(|t| e[t] * (e[t - order] + corr * e[t])).sum()
        })
        .collect();
    finish(&contributions, order, periods)
}

fn check_order(order: usize, periods: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidInput("serial-correlation order must be at least 1".into()));
    }
    if order + 1 >= periods {
        return Err(Error::InvalidInput(format!(
            "order {order} needs more than {} periods, found {periods}",
            order + 1
        )));
    }
    Ok(())
}

fn finish(contributions: &[f64], order: usize, periods: usize) -> Result<TestReport> {
    if contributions.len() < 2 {
        return Err(Error::InsufficientData(
            "serial-correlation test needs at least 2 units with lagged residuals".into(),
        ));
    }
    let sum: f64 = contributions.iter().sum();
    let ss: f64 = contributions.iter().map(|s| s * s).sum();
    if !(ss > 0.0) {
        return Err(Error::Degenerate("residuals carry no variation".into()));
    }
    let stat = sum / ss.sqrt();
    Ok(TestReport {
        test: "lm_serial".into(),
        statistic: stat,
        p_value: 2.0 * std_normal().cdf(-stat.abs()),
        null_hypothesis: format!("no serial correlation of order {order}"),
        estimate: None,
        units: contributions.len(),
        periods,
        options: TestOptions { order: Some(order), ..Default::default() },
    })
}
