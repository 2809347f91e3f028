use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{quantile, sorted_finite};
use crate::error::{Error, Result};
use crate::estimator::{fit, RegressionSpec};
use crate::panel::RegionPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Countries,
    /// Every replicate sees the original panel; a test hook.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub resampling: Resampling,
}

fn default_levels() -> Vec<f64> {
    vec![0.9]
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self { replications, seed, levels: default_levels(), resampling: Resampling::Countries }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: usize,
    pub reason: String,
}

/// Coefficient draws from a bootstrap; row r of `draws` belongs to
/// replicate `replicates[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun {
    pub replications: usize,
    pub seed: u64,
    pub names: Vec<String>,
    pub point: Vec<f64>,
    pub replicates: Vec<usize>,
    pub draws: Vec<Vec<f64>>,
    pub failures: Vec<Failure>,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDraws {
    pub name: String,
    pub point: f64,
    pub median: f64,
    pub sd: f64,
    pub intervals: Vec<IntervalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replications: usize,
    pub successes: usize,
    pub failures: usize,
    pub seed: u64,
    pub coefficients: Vec<CoefficientDraws>,
}

impl BootstrapRun {
    pub fn successes(&self) -> usize {
        self.draws.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingCoefficient(name.to_string()))
    }

    /// Draws of one coefficient across successful replicates.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name)?;
        Ok(self.draws.iter().map(|d| d[j]).collect())
    }

    /// Equal-tailed percentile interval at `level`.
    pub fn percentile_interval(&self, name: &str, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("interval level {level} outside (0, 1)")));
        }
        let v = sorted_finite(&self.column(name)?);
        if v.is_empty() {
            return Err(Error::InsufficientData("no successful replicates".into()));
        }
        let tail = (1.0 - level) / 2.0;
        Ok((quantile(&v, tail), quantile(&v, 1.0 - tail)))
    }

    pub fn summary(&self) -> Result<BootstrapSummary> {
        let mut coefficients = Vec::new();
        for (j, name) in self.names.iter().enumerate() {
            let col: Vec<f64> = self.draws.iter().map(|d| d[j]).collect();
            let sorted = sorted_finite(&col);
            let n = sorted.len() as f64;
            let mean = sorted.iter().sum::<f64>() / n;
            let sd = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            let intervals = self
                .levels
                .iter()
                .map(|&level| {
                    let (lo, hi) = self.percentile_interval(name, level)?;
                    Ok(IntervalSummary { level, lo, hi })
                })
                .collect::<Result<_>>()?;
            coefficients.push(CoefficientDraws {
                name: name.clone(),
                point: self.point[j],
                median: quantile(&sorted, 0.5),
                sd,
                intervals,
            });
        }
        Ok(BootstrapSummary {
            replications: self.replications,
            successes: self.successes(),
            failures: self.failures.len(),
            seed: self.seed,
            coefficients,
        })
    }

    /// Replicate matrix as CSV: `replicate,<name>...`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["replicate".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (r, d) in self.replicates.iter().zip(&self.draws) {
            let mut rec = vec![r.to_string()];
            rec.extend(d.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorted distinct countries across `panels`.
pub fn country_universe(panels: &[&RegionPanel]) -> Vec<String> {
    let mut c: Vec<String> = panels.iter().flat_map(|p| p.country().iter().cloned()).collect();
    c.sort();
    c.dedup();
    c
}

/// Countries drawn with replacement for replicate `replicate`.
pub fn draw_countries(universe: &[String], seed: u64, replicate: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..universe.len()).map(|_| universe[rng.random_range(0..universe.len())].clone()).collect()
}

/// Stacks the blocks of the drawn countries. The k-th repeat (k ≥ 1) of a
/// country gets region and country ids suffixed with `@k`, so duplicates
/// form distinct clusters and fixed-effect groups.
pub fn resample_countries(panel: &RegionPanel, drawn: &[String]) -> Result<RegionPanel> {
    let blocks = panel.group_rows(|i| panel.country()[i].clone());
    let by_country: HashMap<&str, &Vec<usize>> =
        blocks.iter().map(|rows| (panel.country()[rows[0]].as_str(), rows)).collect();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut indices = Vec::new();
    let mut region = Vec::new();
    let mut country = Vec::new();
    for c in drawn {
        let k = seen.entry(c.as_str()).or_insert(0);
        let Some(rows) = by_country.get(c.as_str()) else {
            *k += 1;
            continue;
        };
        let suffix = if *k == 0 { String::new() } else { format!("@{k}") };
        *k += 1;
        for &i in rows.iter() {
            indices.push(i);
            region.push(format!("{}{suffix}", panel.region()[i]));
            country.push(format!("{}{suffix}", panel.country()[i]));
        }
    }
    if indices.is_empty() {
        return Err(Error::InsufficientData("resample drew no observed country".into()));
    }
    let mut out = panel.select_rows(&indices);
    out.relabel(region, country);
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| (&out.region()[a], out.time()[a]).cmp(&(&out.region()[b], out.time()[b])));
    Ok(out.select_rows(&order))
}

/// Bootstrap of a general estimator. `estimate` maps a panel to named
/// coefficients; it is run on `panel` for the point estimate and on every
/// resampled panel, so any sample-dependent preparation inside it is
/// redone per replicate. `universe` is the list countries are drawn from.
pub fn block_bootstrap_with<F>(
    panel: &RegionPanel,
    universe: &[String],
    options: &BootstrapOptions,
    estimate: F,
) -> Result<BootstrapRun>
where
    F: Fn(&RegionPanel) -> Result<(Vec<String>, Vec<f64>)> + Sync,
{
    if options.replications == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    if universe.len() < 2 && options.resampling == Resampling::Countries {
        return Err(Error::InsufficientData(format!(
            "country bootstrap needs at least 2 countries, found {}",
            universe.len()
        )));
    }
    let (names, point) = estimate(panel)?;
    let outcomes: Vec<std::result::Result<Vec<f64>, String>> = (0..options.replications)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<Vec<f64>> {
                let (n, v) = match options.resampling {
                    Resampling::Identity => estimate(panel)?,
                    Resampling::Countries => {
                        let drawn = draw_countries(universe, options.seed, r);
                        estimate(&resample_countries(panel, &drawn)?)?
                    }
                };
                names
                    .iter()
                    .map(|name| {
                        let j = n.iter().position(|m| m == name).ok_or_else(|| {
                            Error::Degenerate(format!("coefficient {name} not estimable"))
                        })?;
                        if v[j].is_finite() {
                            Ok(v[j])
                        } else {
                            Err(Error::Degenerate(format!("coefficient {name} is not finite")))
                        }
                    })
                    .collect()
            };
            run().map_err(|e| e.to_string())
        })
        .collect();
    let mut out = BootstrapRun {
        replications: options.replications,
        seed: options.seed,
        names,
        point,
        replicates: Vec::new(),
        draws: Vec::new(),
        failures: Vec::new(),
        levels: options.levels.clone(),
    };
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(d) => {
                out.replicates.push(r);
                out.draws.push(d);
            }
            Err(reason) => out.failures.push(Failure { replicate: r, reason }),
        }
    }
    if !out.failures.is_empty() {
        log::warn!("{} of {} bootstrap replicates failed", out.failures.len(), out.replications);
    }
    Ok(out)
}

/// Bootstrap of a regression fitted with [`fit`].
pub fn block_bootstrap(
    panel: &RegionPanel,
    spec: &RegressionSpec,
    options: &BootstrapOptions,
) -> Result<BootstrapRun> {
    let universe = country_universe(&[panel]);
    block_bootstrap_with(panel, &universe, options, |p| {
        let f = fit::<f64>(p, spec)?;
        Ok((f.names, f.coefficients))
    })
}

/// Two bootstraps whose replicate r resamples the same countries, drawn
/// from the union of both panels' countries.
pub fn paired_bootstrap<F, G>(
    first: &RegionPanel,
    second: &RegionPanel,
    options: &BootstrapOptions,
    estimate_first: F,
    estimate_second: G,
) -> Result<(BootstrapRun, BootstrapRun)>
where
    F: Fn(&RegionPanel) -> Result<(Vec<String>, Vec<f64>)> + Sync,
    G: Fn(&RegionPanel) -> Result<(Vec<String>, Vec<f64>)> + Sync,
{
    let universe = country_universe(&[first, second]);
    let a = block_bootstrap_with(first, &universe, options, estimate_first)?;
    let b = block_bootstrap_with(second, &universe, options, estimate_second)?;
    Ok((a, b))
}
