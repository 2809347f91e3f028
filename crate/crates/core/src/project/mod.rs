//! Projection of GDP per capita losses under warming scenarios.
//!
//! For a damage draw b and a climate simulation c, region i accumulates
//! φ_it = g(T_it) − g(T_i0), the extra growth relative to staying at its
//! baseline climate, into Ψ_it = Σ_{s≤t} φ_is, the log deviation of GDP per
//! capita from the no-warming counterfactual. Regions are combined as
//! weighted means of e^Ψ − 1 and the (b, c) pairs give the distribution.

mod damage;
mod inputs;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::{quantile, sorted_finite};

pub use damage::{DamageFunction, DamageSource};
pub use inputs::{
    baseline_climate, read_groups_csv, read_scenarios_csv, ClimateScenario, Socioeconomics,
    WeightKind,
};

/// Label of the all-region aggregate in outputs.
pub const GLOBAL: &str = "global";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionPath {
    pub first_year: i32,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Ψ path of one region from `first_year` on, given its baseline
/// temperature and scenario temperatures.
pub fn project_region(
    damage: &DamageFunction,
    baseline: f64,
    temps: &[f64],
    first_year: i32,
) -> Result<ProjectionPath> {
    let g0 = damage.growth(baseline)?;
    let mut phi = Vec::with_capacity(temps.len());
    let mut psi = Vec::with_capacity(temps.len());
    let mut acc = 0.0;
    for &t in temps {
        let p = damage.growth(t)? - g0;
        acc += p;
        phi.push(p);
        psi.push(acc);
    }
    Ok(ProjectionPath { first_year, phi, psi })
}

/// `n` (draw, scenario) pairs sampled uniformly with replacement.
pub fn sample_uncertainty(draws: usize, scenarios: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if draws == 0 || scenarios == 0 {
        return Err(Error::InvalidInput("need at least one draw and one scenario".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| (rng.random_range(0..draws), rng.random_range(0..scenarios))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub p10: f64,
    pub p90: f64,
}

pub fn summarize(values: &[f64]) -> Distribution {
    let s = sorted_finite(values);
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Distribution { n, mean, sd, p10: quantile(&s, 0.1), p90: quantile(&s, 0.9) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupValues {
    pub groups: BTreeMap<String, f64>,
    pub global: f64,
    /// Regions without a usable weight.
    pub excluded: Vec<String>,
}

/// Weighted means of `changes` (e^Ψ − 1 per region) by group and overall.
/// Regions absent from `weights` are excluded; regions absent from
/// `groups` enter only the global value.
pub fn aggregate_values(
    changes: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
    groups: &BTreeMap<String, String>,
) -> GroupValues {
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut global = (0.0, 0.0);
    let mut excluded = Vec::new();
    for (region, &v) in changes {
        let Some(&w) = weights.get(region) else {
            excluded.push(region.clone());
            continue;
        };
        global.0 += w * v;
        global.1 += w;
        if let Some(g) = groups.get(region) {
            let e = sums.entry(g.clone()).or_insert((0.0, 0.0));
            e.0 += w * v;
            e.1 += w;
        }
    }
    GroupValues {
        groups: sums.into_iter().map(|(g, (a, b))| (g, a / b)).collect(),
        global: global.0 / global.1,
        excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// First projected year; the baseline is the state just before it.
    pub from: i32,
    pub to: i32,
    pub weight: WeightKind,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { from: 2020, to: 2100, weight: WeightKind::Population, samples: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedPair {
    pub draw: usize,
    pub scenario: String,
    pub region: String,
    pub reason: String,
}

/// Distributions over (draw, scenario) pairs of aggregate percentage
/// changes per year, and of each region's change in the final year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub years: Vec<i32>,
    pub pairs: Vec<(usize, usize)>,
    pub flagged: Vec<FlaggedPair>,
    /// Group name (and [`GLOBAL`]) to one distribution per year.
    pub groups: BTreeMap<String, Vec<Distribution>>,
    pub regions: BTreeMap<String, Distribution>,
    pub unweighted_regions: Vec<String>,
    /// Global path of every kept pair, one value per year.
    pub global_runs: Vec<Vec<f64>>,
}

struct PairOutcome {
    /// Per year: group values.
    groups: Vec<BTreeMap<String, f64>>,
    global: Vec<f64>,
    final_change: BTreeMap<String, f64>,
}

/// Runs every sampled pair and summarizes.
pub fn run_projection(
    damages: &[DamageFunction],
    scenarios: &[ClimateScenario],
    baseline: &BTreeMap<String, f64>,
    socio: &Socioeconomics,
    groups: &BTreeMap<String, String>,
    options: &ProjectionOptions,
) -> Result<ProjectionReport> {
    let pairs = sample_uncertainty(damages.len(), scenarios.len(), options.samples, options.seed)?;
    if options.from > options.to {
        return Err(Error::InvalidInput(format!("empty projection window {}..={}", options.from, options.to)));
    }
    let regions: Vec<String> = scenarios[0].paths.keys().cloned().collect();
    let missing: Vec<&String> = regions.iter().filter(|r| !baseline.contains_key(*r)).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} scenario region(s) lack a baseline climate, e.g. {}",
            missing.len(),
            missing[0]
        )));
    }
    let years: Vec<i32> = (options.from..=options.to).collect();
    let weights: Vec<BTreeMap<String, f64>> = years
        .iter()
        .map(|&y| {
            regions
                .iter()
                .filter_map(|r| socio.weight(r, y, options.weight).map(|w| (r.clone(), w)))
                .collect()
        })
        .collect();
    let mut unweighted: Vec<String> = regions
        .iter()
        .filter(|r| weights.iter().any(|w| !w.contains_key(*r)))
        .cloned()
        .collect();
    unweighted.sort();
    if !unweighted.is_empty() {
        log::warn!("{} region(s) lack weights in some projection year and are excluded there", unweighted.len());
    }

    let outcomes: Vec<std::result::Result<PairOutcome, FlaggedPair>> = pairs
        .par_iter()
        .map(|&(b, c)| {
            let scen = &scenarios[c];
            let flag = |region: &str, e: Error| FlaggedPair {
                draw: b,
                scenario: scen.id.clone(),
                region: region.to_string(),
                reason: e.to_string(),
            };
            let mut per_year: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); years.len()];
            for r in &regions {
                let temps = scen.window(r, options.from, options.to).map_err(|e| flag(r, e))?;
                let path = project_region(&damages[b], baseline[r], temps, options.from)
                    .map_err(|e| flag(r, e))?;
                for (k, psi) in path.psi.iter().enumerate() {
                    per_year[k].insert(r.clone(), psi.exp_m1());
                }
            }
            let mut out = PairOutcome {
                groups: Vec::with_capacity(years.len()),
                global: Vec::with_capacity(years.len()),
                final_change: per_year.last().cloned().unwrap_or_default(),
            };
            for (k, changes) in per_year.iter().enumerate() {
                let agg = aggregate_values(changes, &weights[k], groups);
                out.groups.push(agg.groups);
                out.global.push(agg.global);
            }
            Ok(out)
        })
        .collect();

    let mut flagged = Vec::new();
    let mut kept = Vec::new();
    for o in outcomes {
        match o {
            Ok(p) => kept.push(p),
            Err(f) => flagged.push(f),
        }
    }
    if !flagged.is_empty() {
        log::warn!("{} of {} projection pairs flagged and excluded", flagged.len(), pairs.len());
    }
    let mut group_names: Vec<String> = groups.values().cloned().collect();
    group_names.sort();
    group_names.dedup();
    let mut summary: BTreeMap<String, Vec<Distribution>> = BTreeMap::new();
    for g in &group_names {
        let per_year = (0..years.len())
            .map(|k| {
                let v: Vec<f64> = kept.iter().filter_map(|p| p.groups[k].get(g).copied()).collect();
                summarize(&v)
            })
            .collect();
        summary.insert(g.clone(), per_year);
    }
    summary.insert(
        GLOBAL.to_string(),
        (0..years.len())
            .map(|k| summarize(&kept.iter().map(|p| p.global[k]).collect::<Vec<_>>()))
            .collect(),
    );
    let region_summary: BTreeMap<String, Distribution> = regions
        .iter()
        .map(|r| {
            let v: Vec<f64> = kept.iter().filter_map(|p| p.final_change.get(r).copied()).collect();
            (r.clone(), summarize(&v))
        })
        .collect();
    Ok(ProjectionReport {
        years,
        pairs,
        flagged,
        groups: summary,
        regions: region_summary,
        unweighted_regions: unweighted,
        global_runs: kept.into_iter().map(|p| p.global).collect(),
    })
}

impl ProjectionReport {
    /// `group,year,n,mean,sd,p10,p90`.
    pub fn write_group_paths_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["group", "year", "n", "mean", "sd", "p10", "p90"])?;
        for (g, dists) in &self.groups {
            for (y, d) in self.years.iter().zip(dists) {
                w.write_record([
                    g.clone(),
                    y.to_string(),
                    d.n.to_string(),
                    format!("{:?}", d.mean),
                    format!("{:?}", d.sd),
                    format!("{:?}", d.p10),
                    format!("{:?}", d.p90),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `region_id,n,mean,sd,p10,p90` for the final projected year.
    pub fn write_region_table_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["region_id", "n", "mean", "sd", "p10", "p90"])?;
        for (r, d) in &self.regions {
            w.write_record([
                r.clone(),
                d.n.to_string(),
                format!("{:?}", d.mean),
                format!("{:?}", d.sd),
                format!("{:?}", d.p10),
                format!("{:?}", d.p90),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `run,year,global`, one row per kept pair and year.
    pub fn write_global_runs_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["run", "year", "global"])?;
        for (k, run) in self.global_runs.iter().enumerate() {
            for (y, v) in self.years.iter().zip(run) {
                w.write_record([k.to_string(), y.to_string(), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_warming_means_no_loss() {
        let d = DamageFunction::new(DamageSource::AnnualPanel, 0.02, -0.0008);
        let p = project_region(&d, 22.0, &[22.0; 81], 2020).unwrap();
        assert!(p.psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_weighted_aggregate() {
        let changes: BTreeMap<String, f64> =
            [("a".into(), 0.0f64.exp_m1()), ("b".into(), 2f64.ln().exp_m1())].into();
        let weights: BTreeMap<String, f64> = [("a".into(), 1.0), ("b".into(), 3.0)].into();
        let groups: BTreeMap<String, String> = [("a".into(), "G".into()), ("b".into(), "G".into())].into();
        let v = aggregate_values(&changes, &weights, &groups);
        assert!((v.global - 0.75).abs() < 1e-15);
        assert!((v.groups["G"] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn single_pair_grid() {
        let s = sample_uncertainty(1, 1, 50, 3).unwrap();
        assert!(s.iter().all(|&p| p == (0, 0)));
        assert_eq!(sample_uncertainty(3, 4, 20, 9).unwrap(), sample_uncertainty(3, 4, 20, 9).unwrap());
        assert!(sample_uncertainty(0, 4, 20, 9).is_err());
    }
}
