//! Scenario, socioeconomic and grouping inputs for projections.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::RegionPanel;

/// Region-aggregated annual temperature paths of one climate simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateScenario {
    pub id: String,
    pub first_year: i32,
    /// Temperature (°C) per region for consecutive years from `first_year`.
    pub paths: BTreeMap<String, Vec<f64>>,
}

impl ClimateScenario {
    pub fn last_year(&self) -> i32 {
        self.first_year + self.paths.values().next().map_or(0, Vec::len) as i32 - 1
    }

    /// Temperatures of `region` for `from..=to`.
    pub fn window(&self, region: &str, from: i32, to: i32) -> Result<&[f64]> {
        let path = self
            .paths
            .get(region)
            .ok_or_else(|| Error::InvalidInput(format!("scenario {} lacks region {region}", self.id)))?;
        if from < self.first_year || to > self.last_year() || from > to {
            return Err(Error::InvalidInput(format!(
                "scenario {} covers {}..={}, not {from}..={to}",
                self.id,
                self.first_year,
                self.last_year()
            )));
        }
        let a = (from - self.first_year) as usize;
        let b = (to - self.first_year) as usize;
        Ok(&path[a..=b])
    }
}

#[derive(Debug, Deserialize)]
struct ScenarioRecord {
    scenario_id: String,
    region_id: String,
    year: i32,
    #[serde(alias = "T", alias = "temp")]
    t: f64,
}

/// Reads `scenario_id,region_id,year,T`. Every scenario must cover the same
/// regions over the same contiguous years.
pub fn read_scenarios_csv<R: Read>(reader: R) -> Result<Vec<ClimateScenario>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut raw: BTreeMap<String, BTreeMap<String, BTreeMap<i32, f64>>> = BTreeMap::new();
    for rec in rdr.deserialize() {
        let r: ScenarioRecord = rec?;
        if !r.t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "scenario {} region {} year {}: non-finite temperature",
                r.scenario_id, r.region_id, r.year
            )));
        }
        let slot = raw.entry(r.scenario_id.clone()).or_default().entry(r.region_id.clone()).or_default();
        if slot.insert(r.year, r.t).is_some() {
            return Err(Error::InvalidInput(format!(
                "scenario {} region {} year {} repeated",
                r.scenario_id, r.region_id, r.year
            )));
        }
    }
    let mut out = Vec::new();
    let mut reference: Option<(Vec<String>, i32, i32)> = None;
    for (id, regions) in raw {
        let mut first = None;
        let mut paths = BTreeMap::new();
        for (region, years) in regions {
            let (&a, &b) = (years.keys().next().unwrap(), years.keys().next_back().unwrap());
            if (b - a + 1) as usize != years.len() {
                return Err(Error::InvalidInput(format!(
                    "scenario {id} region {region}: years are not contiguous"
                )));
            }
            match first {
                None => first = Some((a, b)),
                Some(f) if f != (a, b) => {
                    return Err(Error::InvalidInput(format!(
                        "scenario {id} region {region} covers {a}..={b}, others {}..={}",
                        f.0, f.1
                    )))
                }
                _ => {}
            }
            paths.insert(region, years.into_values().collect::<Vec<_>>());
        }
        let (a, b) = first.expect("scenario has regions");
        let keys: Vec<String> = paths.keys().cloned().collect();
        match &reference {
            None => reference = Some((keys, a, b)),
            Some((k, ra, rb)) => {
                if *k != keys || (*ra, *rb) != (a, b) {
                    return Err(Error::InvalidInput(format!(
                        "scenario {id} does not cover the same regions and years as the others"
                    )));
                }
            }
        }
        out.push(ClimateScenario { id, first_year: a, paths });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    Ok(out)
}

/// Mean of `column` per region over `from..=to`; every region with any row
/// must have a finite value in every year.
pub fn baseline_climate(
    history: &RegionPanel,
    column: &str,
    from: i32,
    to: i32,
) -> Result<BTreeMap<String, f64>> {
    let values = history.column(column)?;
    let mut seen: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
    for i in 0..history.len() {
        let entry = seen.entry(history.region()[i].clone()).or_default();
        let t = history.time()[i];
        if (from..=to).contains(&t) && values[i].is_finite() {
            entry.insert(t, values[i]);
        }
    }
    let years = (to - from + 1) as usize;
    let missing: Vec<&String> = seen.iter().filter(|(_, v)| v.len() != years).map(|(k, _)| k).collect();
    if !missing.is_empty() {
        let list: Vec<&str> = missing.iter().take(20).map(|s| s.as_str()).collect();
        return Err(Error::InsufficientData(format!(
            "{} region(s) lack {column} for some year in {from}..={to}: {}{}",
            missing.len(),
            list.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }
    Ok(seen.into_iter().map(|(k, v)| (k, v.values().sum::<f64>() / years as f64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    #[default]
    Population,
    Gdppc,
}

/// Population and GDP per capita by region at the years provided.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Socioeconomics {
    pub regions: BTreeMap<String, Vec<(i32, f64, f64)>>,
}

#[derive(Debug, Deserialize)]
struct SocioRecord {
    region_id: String,
    year: i32,
    population: f64,
    gdppc: f64,
}

impl Socioeconomics {
    /// Reads `region_id,year,population,gdppc`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut regions: BTreeMap<String, Vec<(i32, f64, f64)>> = BTreeMap::new();
        for rec in rdr.deserialize() {
            let r: SocioRecord = rec?;
            regions.entry(r.region_id).or_default().push((r.year, r.population, r.gdppc));
        }
        for (k, v) in regions.iter_mut() {
            v.sort_by_key(|e| e.0);
            if v.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidInput(format!("region {k}: repeated year")));
            }
        }
        Ok(Self { regions })
    }

    /// Weight of `region` in `year`, linearly interpolated between the
    /// provided years; `None` outside their range or if not finite.
    pub fn weight(&self, region: &str, year: i32, kind: WeightKind) -> Option<f64> {
        let pts = self.regions.get(region)?;
        let pick = |e: &(i32, f64, f64)| match kind {
            WeightKind::Population => e.1,
            WeightKind::Gdppc => e.2,
        };
        let k = pts.partition_point(|e| e.0 < year);
        let v = if k < pts.len() && pts[k].0 == year {
            pick(&pts[k])
        } else if k == 0 || k == pts.len() {
            return None;
        } else {
            let (a, b) = (&pts[k - 1], &pts[k]);
            let f = (year - a.0) as f64 / (b.0 - a.0) as f64;
            pick(a) + f * (pick(b) - pick(a))
        };
        (v.is_finite() && v >= 0.0).then_some(v)
    }
}

/// Reads a two-column `region_id,group` map.
pub fn read_groups_csv<R: Read>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::InvalidInput("group map rows need region_id and group".into()));
        }
        if out.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(Error::InvalidInput(format!("region {} listed twice", &rec[0])));
        }
    }
    Ok(out)
}
