//! Plot-ready tables: marginal-effect curves, a histogram of the climate
//! variable behind them, and percentile bands of projected paths.

use std::collections::BTreeMap;

use serde::Deserialize;

use climecon::panel::read_panel_csv;

use crate::config::RunConfig;
use crate::output::Outputs;
use crate::stages::{bands, stage_options, PlotDataOptions};
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Deserialize)]
struct MarginRow {
    level: f64,
    effect: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Deserialize)]
struct RunRow {
    year: i32,
    global: f64,
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(runtime)?;
    for r in rows {
        w.write_record(&r).map_err(runtime)?;
    }
    w.into_inner().map_err(runtime)
}

/// Equal-width bins over the finite range of `values`; the last bin is
/// closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<(f64, f64, usize)>, CliError> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() || bins == 0 {
        return Err(runtime("histogram needs finite values and at least one bin"));
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for x in v {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
        .collect())
}

pub fn plot_data(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: PlotDataOptions = stage_options(config)?;
    if config.inputs.is_empty() {
        return Err(CliError::Config(
            "inputs: plot-data needs margins (from `margins`), panel (from `build-panel`) \
             or projection_runs (from `project`)"
                .into(),
        ));
    }
    let mut out = Outputs::default();
    if let Some(path) = config.input("margins") {
        let mut rdr = csv::Reader::from_path(path).map_err(runtime)?;
        let rows: Vec<MarginRow> = rdr.deserialize().collect::<Result<_, _>>().map_err(runtime)?;
        if rows.is_empty() {
            return Err(runtime("margins: empty grid"));
        }
        if rows.windows(2).any(|w| !(w[1].level > w[0].level)) {
            return Err(runtime("margins: grid is not strictly increasing"));
        }
        let bytes = csv_bytes(
            &["level", "effect", "lo", "hi"],
            rows.iter().map(|r| [r.level, r.effect, r.lo, r.hi].iter().map(|v| format!("{v:?}")).collect()),
        )?;
        out.add("plot_margins.csv", bytes);
    }
    if let Some(path) = config.input("panel") {
        let req = opts.histogram.unwrap_or_default();
        let panel = read_panel_csv(std::fs::File::open(path).map_err(runtime)?).map_err(runtime)?;
        let h = histogram(panel.column(&req.variable).map_err(runtime)?, req.bins)?;
        let bytes = csv_bytes(
            &["bin_lo", "bin_hi", "count"],
            h.into_iter().map(|(a, b, c)| vec![format!("{a:?}"), format!("{b:?}"), c.to_string()]),
        )?;
        out.add("plot_histogram.csv", bytes);
    }
    if let Some(path) = config.input("projection_runs") {
        let mut rdr = csv::Reader::from_path(path).map_err(runtime)?;
        let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for rec in rdr.deserialize() {
            let r: RunRow = rec.map_err(runtime)?;
            by_year.entry(r.year).or_default().push(r.global);
        }
        if by_year.is_empty() {
            return Err(runtime("projection_runs: no runs"));
        }
        let bytes = csv_bytes(
            &["year", "n", "mean", "p10", "p50", "p90"],
            bands(&by_year).into_iter().map(|(y, n, m, a, b, c)| {
                vec![y.to_string(), n.to_string(), format!("{m:?}"), format!("{a:?}"), format!("{b:?}"), format!("{c:?}")]
            }),
        )?;
        out.add("plot_projection.csv", bytes);
    }
    Ok(out)
}
