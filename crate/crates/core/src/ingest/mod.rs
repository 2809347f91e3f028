//! Gridded climate and population to region-year aggregates.
//!
//! Cells are assigned to regions by their centroid. Monthly climate values
//! are area-weighted within a region, then averaged (temperature) or summed
//! (precipitation) over the year. Population is summed over cells.

mod geojson;
mod geometry;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelRow, RegionPanel};

pub use geojson::read_regions_geojson;
pub use geometry::{assign_cells, country_map, Location, RegionShape};

/// One grid cell with its observations keyed by `(year, month)`. Month 0
/// marks an annual observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cell_id: String,
    pub lon: f64,
    pub lat: f64,
    /// km².
    pub area: f64,
    pub values: BTreeMap<(i32, u8), f64>,
}

impl GridCell {
    pub fn new(cell_id: impl Into<String>, lon: f64, lat: f64, area: f64) -> Self {
        Self { cell_id: cell_id.into(), lon, lat, area, values: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidInput(format!("cell {}: {what}", self.cell_id)));
        if !(self.area > 0.0 && self.area.is_finite()) {
            return bad(format!("area {} is not positive", self.area));
        }
        if !(-180.0..=180.0).contains(&self.lon) || !(-90.0..=90.0).contains(&self.lat) {
            return bad(format!("centroid ({}, {}) out of range", self.lon, self.lat));
        }
        if let Some(&(y, m)) = self.values.keys().find(|k| k.1 > 12) {
            return bad(format!("year {y} has month {m}"));
        }
        Ok(())
    }

    fn years(&self) -> BTreeSet<i32> {
        self.values.keys().map(|k| k.0).collect()
    }

    /// The twelve monthly values of `year` if all are present and finite.
    fn months(&self, year: i32) -> Option<[f64; 12]> {
        let mut out = [0.0; 12];
        for (m, slot) in out.iter_mut().enumerate() {
            let v = *self.values.get(&(year, m as u8 + 1))?;
            if !v.is_finite() {
                return None;
            }
            *slot = v;
        }
        Some(out)
    }

    /// Annual observation of `year`: the month-0 value, else the mean of the
    /// monthly values present.
    fn annual(&self, year: i32) -> Option<f64> {
        if let Some(&v) = self.values.get(&(year, 0)) {
            return Some(v);
        }
        let months: Vec<f64> = self.values.range((year, 1)..=(year, 12)).map(|(_, &v)| v).collect();
        (!months.is_empty()).then(|| months.iter().sum::<f64>() / months.len() as f64)
    }
}

#[derive(Debug, Deserialize)]
struct CellRecord {
    cell_id: String,
    lon: f64,
    lat: f64,
    area_km2: f64,
    year: i32,
    #[serde(default)]
    month: Option<u8>,
    value: Option<f64>,
}

/// Reads the long cell table `cell_id,lon,lat,area_km2,year,month,value`.
/// An empty month is an annual observation; an empty value is missing.
/// Cells come back sorted by id.
pub fn read_cells_csv<R: Read>(reader: R) -> Result<Vec<GridCell>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut cells: BTreeMap<String, GridCell> = BTreeMap::new();
    for (line, rec) in rdr.deserialize().enumerate() {
        let r: CellRecord = rec?;
        let cell = cells
            .entry(r.cell_id.clone())
            .or_insert_with(|| GridCell::new(r.cell_id.clone(), r.lon, r.lat, r.area_km2));
        if (cell.lon, cell.lat, cell.area) != (r.lon, r.lat, r.area_km2) {
            return Err(Error::InvalidInput(format!(
                "line {}: cell {} changes its location or area",
                line + 2,
                r.cell_id
            )));
        }
        let key = (r.year, r.month.unwrap_or(0));
        if cell.values.insert(key, r.value.unwrap_or(f64::NAN)).is_some() {
            return Err(Error::InvalidInput(format!(
                "line {}: cell {} repeats year {} month {}",
                line + 2,
                r.cell_id,
                key.0,
                key.1
            )));
        }
    }
    let cells: Vec<GridCell> = cells.into_values().collect();
    for c in &cells {
        c.validate()?;
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Mean of the twelve region-months (temperature).
    Mean,
    /// Sum of the twelve region-months (precipitation).
    Sum,
}

/// Region-year values of one climate variable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClimateAggregate {
    pub values: BTreeMap<String, BTreeMap<i32, f64>>,
    /// Region-years dropped because a contributing cell lacked a month.
    pub incomplete: Vec<(String, i32)>,
}

fn cells_by_region<'a>(
    cells: &'a [GridCell],
    assignment: &'a BTreeMap<String, String>,
) -> BTreeMap<&'a str, Vec<&'a GridCell>> {
    let mut out: BTreeMap<&str, Vec<&GridCell>> = BTreeMap::new();
    for c in cells {
        if let Some(r) = assignment.get(&c.cell_id) {
            out.entry(r.as_str()).or_default().push(c);
        }
    }
    out
}

/// Normalized area weights of the cells mapped to each region.
pub fn area_weights(
    cells: &[GridCell],
    assignment: &BTreeMap<String, String>,
) -> BTreeMap<String, Vec<(String, f64)>> {
    cells_by_region(cells, assignment)
        .into_iter()
        .map(|(r, cs)| {
            let total: f64 = cs.iter().map(|c| c.area).sum();
            (r.to_string(), cs.iter().map(|c| (c.cell_id.clone(), c.area / total)).collect())
        })
        .collect()
}

/// Area-weighted region-year aggregate. A cell contributes to every year in
/// which it has any observation; if such a cell lacks a finite value for
/// one of the twelve months the region-year is dropped and listed in
/// `incomplete`.
pub fn aggregate_climate(
    cells: &[GridCell],
    assignment: &BTreeMap<String, String>,
    statistic: Statistic,
) -> ClimateAggregate {
    let groups: Vec<(&str, Vec<&GridCell>)> = cells_by_region(cells, assignment).into_iter().collect();
    let per_region: Vec<(String, BTreeMap<i32, f64>, Vec<i32>)> = groups
        .par_iter()
        .map(|(region, cs)| {
            let years: BTreeSet<i32> = cs.iter().flat_map(|c| c.years()).collect();
            let mut values = BTreeMap::new();
            let mut dropped = Vec::new();
            'year: for y in years {
                let mut num = [0.0; 12];
                let mut den = 0.0;
                for c in cs.iter().filter(|c| c.values.range((y, 0)..=(y, u8::MAX)).next().is_some()) {
                    let Some(m) = c.months(y) else {
                        dropped.push(y);
                        continue 'year;
                    };
                    for k in 0..12 {
                        num[k] += c.area * m[k];
                    }
                    den += c.area;
                }
                let total: f64 = num.iter().map(|v| v / den).sum();
                values.insert(
                    y,
                    match statistic {
                        Statistic::Mean => total / 12.0,
                        Statistic::Sum => total,
                    },
                );
            }
            (region.to_string(), values, dropped)
        })
        .collect();
    let mut out = ClimateAggregate::default();
    for (region, values, dropped) in per_region {
        for y in dropped {
            log::warn!("region {region} year {y}: incomplete months, dropped");
            out.incomplete.push((region.clone(), y));
        }
        if !values.is_empty() {
            out.values.insert(region, values);
        }
    }
    out
}

/// Regions of `shapes` with no mapped cell. Each is logged as a warning.
pub fn empty_regions(shapes: &[RegionShape], assignment: &BTreeMap<String, String>) -> Vec<String> {
    let used: BTreeSet<&String> = assignment.values().collect();
    let mut out: Vec<String> = shapes
        .iter()
        .filter(|s| !used.contains(&s.region_id))
        .map(|s| s.region_id.clone())
        .collect();
    out.sort();
    for r in &out {
        log::warn!("region {r} has no mapped cells and is excluded");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationYear {
    pub population: f64,
    pub urban: f64,
    /// Urban share; 0 when the total is 0.
    pub urbanization: f64,
    /// Set when the total population is 0.
    pub empty: bool,
}

/// Sums urban and rural population over mapped cells per region-year.
/// Both grids must list the same cells and years; negative counts are
/// rejected.
pub fn aggregate_population(
    urban: &[GridCell],
    rural: &[GridCell],
    assignment: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, BTreeMap<i32, PopulationYear>>> {
    let rural_by_id: BTreeMap<&str, &GridCell> = rural.iter().map(|c| (c.cell_id.as_str(), c)).collect();
    let urban_ids: BTreeSet<&str> = urban.iter().map(|c| c.cell_id.as_str()).collect();
    if urban_ids.len() != rural_by_id.len() || !urban_ids.iter().all(|id| rural_by_id.contains_key(id)) {
        return Err(Error::InvalidInput("urban and rural grids list different cells".into()));
    }
    let mut sums: BTreeMap<String, BTreeMap<i32, (f64, f64)>> = BTreeMap::new();
    for u in urban {
        let r = rural_by_id[u.cell_id.as_str()];
        if u.years() != r.years() {
            return Err(Error::InvalidInput(format!("cell {}: urban and rural years differ", u.cell_id)));
        }
        let Some(region) = assignment.get(&u.cell_id) else { continue };
        for y in u.years() {
            let (a, b) = (u.annual(y).unwrap_or(f64::NAN), r.annual(y).unwrap_or(f64::NAN));
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "cell {} year {y}: population must be finite and nonnegative",
                    u.cell_id
                )));
            }
            let slot = sums.entry(region.clone()).or_default().entry(y).or_insert((0.0, 0.0));
            slot.0 += a;
            slot.1 += b;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(region, years)| {
            let years = years
                .into_iter()
                .map(|(y, (u, r))| {
                    let total = u + r;
                    let empty = total == 0.0;
                    if empty {
                        log::warn!("region {region} year {y}: zero population, urbanization set to 0");
                    }
                    let urbanization = if empty { 0.0 } else { u / total };
                    (y, PopulationYear { population: total, urban: u, urbanization, empty })
                })
                .collect();
            (region, years)
        })
        .collect())
}

/// One row of the region-year table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionClimateYear {
    pub region_id: String,
    pub country_id: String,
    pub year: i32,
    /// °C.
    pub temperature_mean: f64,
    /// m.
    pub precipitation_total: f64,
    pub population: Option<f64>,
    pub urbanization: Option<f64>,
}

/// Joins the aggregates on region-year. Temperature and precipitation must
/// both be present; population fields are filled where available.
pub fn region_years(
    temperature: &ClimateAggregate,
    precipitation: &ClimateAggregate,
    population: Option<&BTreeMap<String, BTreeMap<i32, PopulationYear>>>,
    countries: &BTreeMap<String, String>,
) -> Result<Vec<RegionClimateYear>> {
    let mut out = Vec::new();
    for (region, temps) in &temperature.values {
        let Some(precs) = precipitation.values.get(region) else { continue };
        let country = countries
            .get(region)
            .ok_or_else(|| Error::InvalidInput(format!("region {region} has no country")))?;
        for (&year, &t) in temps {
            let Some(&p) = precs.get(&year) else { continue };
            let pop = population.and_then(|m| m.get(region)).and_then(|m| m.get(&year));
            out.push(RegionClimateYear {
                region_id: region.clone(),
                country_id: country.clone(),
                year,
                temperature_mean: t,
                precipitation_total: p,
                population: pop.map(|p| p.population),
                urbanization: pop.map(|p| p.urbanization),
            });
        }
    }
    Ok(out)
}

/// Writes `region_id,country_id,year,temp,precip,pop,urb`; the column names
/// match what panel construction expects.
pub fn write_region_years_csv<W: Write>(rows: &[RegionClimateYear], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["region_id", "country_id", "year", "temp", "precip", "pop", "urb"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in rows {
        wtr.write_record([
            r.region_id.clone(),
            r.country_id.clone(),
            r.year.to_string(),
            format!("{:?}", r.temperature_mean),
            format!("{:?}", r.precipitation_total),
            opt(r.population),
            opt(r.urbanization),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// The region-year table as a panel with columns `temp`, `precip` and,
/// where any row has them, `pop` and `urb`.
pub fn to_panel(rows: &[RegionClimateYear]) -> Result<RegionPanel> {
    let with_pop = rows.iter().any(|r| r.population.is_some());
    let rows = rows
        .iter()
        .map(|r| {
            let mut values = BTreeMap::new();
            values.insert("temp".to_string(), r.temperature_mean);
            values.insert("precip".to_string(), r.precipitation_total);
            if with_pop {
                values.insert("pop".to_string(), r.population.unwrap_or(f64::NAN));
                values.insert("urb".to_string(), r.urbanization.unwrap_or(f64::NAN));
            }
            PanelRow {
                region: r.region_id.clone(),
                country: r.country_id.clone(),
                continent: String::new(),
                time: r.year,
                values,
            }
        })
        .collect();
    RegionPanel::from_rows(rows, "year")
}
