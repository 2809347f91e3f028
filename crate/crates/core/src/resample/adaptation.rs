//! Share of the short-run marginal effect offset in the long run,
//! 1 − τ_LD/τ_FE, computed per paired bootstrap replicate.

use std::collections::HashMap;

use serde::Serialize;

use super::{quantile, sorted_finite, BootstrapRun};
use crate::error::{Error, Result};
use crate::inference::{annualize_decadal, Convention, MarginSpec};

/// 1 − τ_LD/τ_FE, or `None` when |τ_FE| is below `floor`.
pub fn ratio_value(tau_fe: f64, tau_ld: f64, floor: f64) -> Option<f64> {
    (tau_fe.abs() >= floor).then(|| 1.0 - tau_ld / tau_fe)
}

fn effect(spec: &MarginSpec, run: &BootstrapRun, draw: &[f64], x: f64) -> Result<f64> {
    let mut total = 0.0;
    for t in &spec.terms {
        total += t.scale * x.powi(t.power) * draw[run.index_of(&t.name)?];
    }
    Ok(total)
}

/// Per grid point, the ratio for every replicate succeeding in both runs
/// (ascending replicate id). The long-difference effect is per decade and
/// annualized first; `None` marks a floored or out-of-domain replicate.
#[allow(clippy::too_many_arguments)]
pub fn adaptation_ratios(
    fe: &BootstrapRun,
    ld: &BootstrapRun,
    fe_spec: &MarginSpec,
    ld_spec: &MarginSpec,
    grid: &[f64],
    floor: f64,
    convention: Convention,
) -> Result<(Vec<usize>, Vec<Vec<Option<f64>>>)> {
    if fe.replications != ld.replications || fe.seed != ld.seed {
        return Err(Error::InvalidInput(format!(
            "runs are not paired: {} replicates (seed {}) vs {} (seed {})",
            fe.replications, fe.seed, ld.replications, ld.seed
        )));
    }
    let ld_rows: HashMap<usize, usize> =
        ld.replicates.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let pairs: Vec<(usize, usize, usize)> = fe
        .replicates
        .iter()
        .enumerate()
        .filter_map(|(i, r)| ld_rows.get(r).map(|&j| (*r, i, j)))
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    for &x in grid {
        let mut row = Vec::with_capacity(pairs.len());
        for &(_, i, j) in &pairs {
            let tau_fe = effect(fe_spec, fe, &fe.draws[i], x)?;
            let phi = effect(ld_spec, ld, &ld.draws[j], x)?;
            row.push(match annualize_decadal(phi, convention) {
                Ok(tau_ld) => ratio_value(tau_fe, tau_ld, floor),
                Err(_) => None,
            });
        }
        out.push(row);
    }
    Ok((pairs.iter().map(|p| p.0).collect(), out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationSummary {
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub p5: Vec<f64>,
    pub p95: Vec<f64>,
    /// Replicates contributing at each grid point.
    pub used: Vec<usize>,
    /// Replicates excluded at each grid point by the floor or the
    /// annualization domain.
    pub filtered: Vec<usize>,
    pub pairs: usize,
    pub floor: f64,
}

impl AdaptationSummary {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "median", "p5", "p95", "used", "filtered"])?;
        for i in 0..self.grid.len() {
            w.write_record([
                format!("{:?}", self.grid[i]),
                format!("{:?}", self.median[i]),
                format!("{:?}", self.p5[i]),
                format!("{:?}", self.p95[i]),
                self.used[i].to_string(),
                self.filtered[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Median and 5th/95th percentiles of the paired ratios on `grid`.
#[allow(clippy::too_many_arguments)]
pub fn adaptation_ratio(
    fe: &BootstrapRun,
    ld: &BootstrapRun,
    fe_spec: &MarginSpec,
    ld_spec: &MarginSpec,
    grid: &[f64],
    floor: f64,
    convention: Convention,
) -> Result<AdaptationSummary> {
    let (ids, ratios) = adaptation_ratios(fe, ld, fe_spec, ld_spec, grid, floor, convention)?;
    let mut s = AdaptationSummary {
        grid: grid.to_vec(),
        median: Vec::new(),
        p5: Vec::new(),
        p95: Vec::new(),
        used: Vec::new(),
        filtered: Vec::new(),
        pairs: ids.len(),
        floor,
    };
    for row in &ratios {
        let kept: Vec<f64> = row.iter().flatten().copied().collect();
        let sorted = sorted_finite(&kept);
        s.median.push(quantile(&sorted, 0.5));
        s.p5.push(quantile(&sorted, 0.05));
        s.p95.push(quantile(&sorted, 0.95));
        s.used.push(sorted.len());
        s.filtered.push(row.len() - sorted.len());
    }
    Ok(s)
}
