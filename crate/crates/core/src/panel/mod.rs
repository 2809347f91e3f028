//! Region-by-time panel and the transforms that build the analysis columns.
//!
//! A [`RegionPanel`] is columnar: identifier vectors for region, country and
//! continent, an integer time index (calendar year, or period index for an
//! averaged panel), and named `f64` columns where missing values are `NaN`.
//! Rows are always kept sorted by `(region, time)`.
//!
//! Column dictionary for the base variables:
//!
//! | column  | meaning                                |
//! |---------|----------------------------------------|
//! | gdppc   | GDP per capita, 2011 PPP $ per person  |
//! | temp    | annual mean temperature, °C            |
//! | precip  | annual total precipitation, m          |
//! | pop     | population, persons                    |
//! | urb     | urban share of population, [0, 1]      |
//! | edu     | mean years of schooling                |
//!
//! Derived columns carry a prefix: `d_` for differences and their
//! interactions, `sq_` for squares, `bin_t_` / `bin_p_` for bin indicators
//! and `w_` for weights.

mod io;
mod period;
mod transforms;

pub use io::{read_panel_csv, write_panel_csv};
pub use period::{
    classify_rich_poor, long_difference, period_average, BlockLayout, PartialBlock, PeriodPanel,
    RichPoorCoding,
};
pub use transforms::{
    bin_indicators, compute_weights, growth_rates, precip_bin, temp_bin, weather_terms, LagForm,
    WeightScheme, N_PRECIP_BINS, N_TEMP_BINS,
};
pub(crate) use transforms::region_weights;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Growth of log GDP per capita.
pub const GROWTH: &str = "d_ln_gdppc";

/// One observation used to assemble a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub region: String,
    pub country: String,
    pub continent: String,
    pub time: i32,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPanel {
    region: Vec<String>,
    country: Vec<String>,
    continent: Vec<String>,
    time: Vec<i32>,
    time_name: String,
    columns: BTreeMap<String, Vec<f64>>,
    /// Free-form provenance notes (dropped rows, block layouts, ...).
    pub notes: Vec<String>,
}

impl RegionPanel {
    /// Assembles a panel from rows, sorting by (region, time). Columns
    /// absent from a row are filled with `NaN`.
    pub fn from_rows(rows: Vec<PanelRow>, time_name: &str) -> Result<Self> {
        let mut rows = rows;
        rows.sort_by(|a, b| (a.region.as_str(), a.time).cmp(&(b.region.as_str(), b.time)));
        for w in rows.windows(2) {
            if w[0].region == w[1].region && w[0].time == w[1].time {
                return Err(Error::InvalidInput(format!(
                    "duplicate observation for region {} at {} {}",
                    w[0].region, time_name, w[0].time
                )));
            }
            if w[0].region == w[1].region && w[0].country != w[1].country {
                return Err(Error::InvalidInput(format!(
                    "region {} linked to more than one country",
                    w[0].region
                )));
            }
        }
        let mut names: Vec<String> = Vec::new();
        for r in &rows {
            for k in r.values.keys() {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        let n = rows.len();
        let mut columns: BTreeMap<String, Vec<f64>> =
            names.into_iter().map(|k| (k, Vec::with_capacity(n))).collect();
        let mut panel = Self {
            region: Vec::with_capacity(n),
            country: Vec::with_capacity(n),
            continent: Vec::with_capacity(n),
            time: Vec::with_capacity(n),
            time_name: time_name.to_string(),
            columns: BTreeMap::new(),
            notes: Vec::new(),
        };
        for r in rows {
            for (k, col) in columns.iter_mut() {
                col.push(r.values.get(k).copied().unwrap_or(f64::NAN));
            }
            panel.region.push(r.region);
            panel.country.push(r.country);
            panel.continent.push(r.continent);
            panel.time.push(r.time);
        }
        if let Some(gdp) = columns.get("gdppc") {
            if let Some(i) = gdp.iter().position(|&v| v.is_finite() && v <= 0.0) {
                log::warn!(
                    "nonpositive gdppc for region {} at {}; growth will be missing",
                    panel.region[i],
                    panel.time[i]
                );
            }
        }
        panel.columns = columns;
        Ok(panel)
    }

    pub fn len(&self) -> usize {
        self.region.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }

    pub fn region(&self) -> &[String] {
        &self.region
    }

    pub fn country(&self) -> &[String] {
        &self.country
    }

    pub fn continent(&self) -> &[String] {
        &self.continent
    }

    pub fn time(&self) -> &[i32] {
        &self.time
    }

    /// `"year"` for annual panels, `"period"` for averaged ones.
    pub fn time_name(&self) -> &str {
        &self.time_name
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Inserts or replaces a column.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "column {name} has {} values, panel has {} rows",
                values.len(),
                self.len()
            )));
        }
        self.columns.insert(name.to_string(), values);
        Ok(())
    }

    pub fn remove_column(&mut self, name: &str) -> Option<Vec<f64>> {
        self.columns.remove(name)
    }

    /// Half-open row ranges, one per region, in row order.
    pub fn region_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.region[i] != self.region[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    /// Row index of the same region at `time - lag`, if present.
    pub fn lag_index(&self, row: usize, lag: i32) -> Option<usize> {
        let target = self.time[row] - lag;
        let mut j = row;
        while j > 0 {
            j -= 1;
            if self.region[j] != self.region[row] || self.time[j] < target {
                return None;
            }
            if self.time[j] == target {
                return Some(j);
            }
        }
        None
    }

    /// Keeps the rows at `indices` (which must be ascending).
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let pick = |v: &Vec<String>| indices.iter().map(|&i| v[i].clone()).collect();
        Self {
            region: pick(&self.region),
            country: pick(&self.country),
            continent: pick(&self.continent),
            time: indices.iter().map(|&i| self.time[i]).collect(),
            time_name: self.time_name.clone(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), indices.iter().map(|&i| v[i]).collect()))
                .collect(),
            notes: self.notes.clone(),
        }
    }

    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select_rows(&idx)
    }

    /// Integer codes for a categorical factor. `region`, `country`,
    /// `continent` and the time name (or `time`) are built in; any numeric
    /// column is treated as categorical by value. Composite factors are
    /// written `a#b`. Codes are dense and follow sorted level order.
    pub fn factor_codes(&self, name: &str) -> Result<Vec<u32>> {
        if let Some((a, b)) = name.split_once('#') {
            let ca = self.factor_codes(a)?;
            let cb = self.factor_codes(b)?;
            let keys: Vec<(u32, u32)> = ca.into_iter().zip(cb).collect();
            return Ok(dense_codes(&keys));
        }
        match name {
            "region" => Ok(dense_codes(&self.region)),
            "country" => Ok(dense_codes(&self.country)),
            "continent" => Ok(dense_codes(&self.continent)),
            "time" => Ok(dense_codes(&self.time)),
            n if n == self.time_name => Ok(dense_codes(&self.time)),
            other => {
                let col = self.column(other)?;
                if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "factor column {other} has a missing value at row {i}"
                    )));
                }
                let bits: Vec<u64> = col.iter().map(|v| (v + 0.0).to_bits()).collect();
                Ok(dense_codes(&bits))
            }
        }
    }

    /// Names a factor is allowed to take even though it is not a column.
    pub fn is_builtin_factor(&self, name: &str) -> bool {
        matches!(name, "region" | "country" | "continent" | "time") || name == self.time_name
    }

    pub(crate) fn rename_time(&mut self, name: &str) {
        self.time_name = name.to_string();
    }

    pub(crate) fn from_parts(
        region: Vec<String>,
        country: Vec<String>,
        continent: Vec<String>,
        time: Vec<i32>,
        time_name: &str,
        columns: BTreeMap<String, Vec<f64>>,
    ) -> Self {
        Self {
            region,
            country,
            continent,
            time,
            time_name: time_name.to_string(),
            columns,
            notes: Vec::new(),
        }
    }

    /// Rewrites region and country ids (used by the bootstrap to give
    /// resampled duplicates distinct identities).
    pub(crate) fn relabel(&mut self, region: Vec<String>, country: Vec<String>) {
        debug_assert_eq!(region.len(), self.len());
        self.region = region;
        self.country = country;
    }

    /// Concatenates panels with identical column sets, re-sorting rows.
    pub fn concat(parts: &[RegionPanel]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("no panels to concatenate".into()))?;
        let mut region = Vec::new();
        let mut country = Vec::new();
        let mut continent = Vec::new();
        let mut time = Vec::new();
        let mut columns: BTreeMap<String, Vec<f64>> =
            first.columns.keys().map(|k| (k.clone(), Vec::new())).collect();
        for p in parts {
            if p.columns.len() != columns.len() || !p.columns.keys().all(|k| columns.contains_key(k))
            {
                return Err(Error::InvalidInput("panels have different columns".into()));
            }
            region.extend_from_slice(&p.region);
            country.extend_from_slice(&p.country);
            continent.extend_from_slice(&p.continent);
            time.extend_from_slice(&p.time);
            for (k, v) in &p.columns {
                columns.get_mut(k).expect("checked").extend_from_slice(v);
            }
        }
        let mut order: Vec<usize> = (0..region.len()).collect();
        order.sort_by(|&a, &b| (&region[a], time[a]).cmp(&(&region[b], time[b])));
        let unsorted = Self::from_parts(region, country, continent, time, &first.time_name, columns);
        Ok(unsorted.select_rows(&order))
    }

    /// Distinct values of the time index, ascending.
    pub fn time_levels(&self) -> Vec<i32> {
        let mut t = self.time.clone();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Row indices grouped by a key function, groups in first-seen order.
    pub(crate) fn group_rows<K: std::hash::Hash + Eq + Clone>(
        &self,
        key: impl Fn(usize) -> K,
    ) -> Vec<Vec<usize>> {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.len() {
            let k = key(i);
            let g = *index.entry(k).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }
}

/// Maps arbitrary keys to dense codes in sorted key order.
pub(crate) fn dense_codes<K: Ord + Clone>(keys: &[K]) -> Vec<u32> {
    let mut levels: Vec<K> = keys.to_vec();
    levels.sort();
    levels.dedup();
    keys.iter()
        .map(|k| levels.binary_search(k).expect("level present") as u32)
        .collect()
}
