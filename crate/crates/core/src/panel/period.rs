use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::transforms::{growth_rates, region_weights, weather_terms, LagForm};
use super::{RegionPanel, GROWTH};
use crate::error::{Error, Result};

/// What to do with trailing years that do not fill a whole block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialBlock {
    /// Only complete m-year blocks are formed.
    #[default]
    Drop,
    /// A trailing remainder of at least m/2 years forms a shorter block.
    KeepIfAtLeastHalf,
}

/// Calendar partition into adjacent, non-overlapping blocks of `years`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub years: u32,
    /// First year of the first block; defaults to the panel's first year.
    #[serde(default)]
    pub start: Option<i32>,
    #[serde(default)]
    pub partial: PartialBlock,
}

impl BlockLayout {
    pub fn new(years: u32) -> Self {
        Self { years, start: None, partial: PartialBlock::Drop }
    }

    /// Inclusive (first, last) year of each block covering `[first, last]`.
    pub fn blocks(&self, first: i32, last: i32) -> Vec<(i32, i32)> {
        let m = self.years as i32;
        let mut out = Vec::new();
        let mut s = self.start.unwrap_or(first);
        while s + m - 1 <= last {
            out.push((s, s + m - 1));
            s += m;
        }
        let remainder = last - s + 1;
        if self.partial == PartialBlock::KeepIfAtLeastHalf && remainder > 0 && 2 * remainder >= m {
            out.push((s, last));
        }
        out
    }
}

/// Region-by-period means. The inner panel's time index is the 0-based
/// period number; `period_start` / `period_end` hold the calendar bounds.
#[derive(Debug, Clone)]
pub struct PeriodPanel {
    pub panel: RegionPanel,
    pub layout: BlockLayout,
    pub blocks: Vec<(i32, i32)>,
    /// Region-periods dropped because a year was missing.
    pub dropped: Vec<(String, i32)>,
}

fn is_derived(name: &str) -> bool {
    ["d_", "sq_", "bin_t_", "bin_p_", "w_"].iter().any(|p| name.starts_with(p))
}

/// Averages every base column over the blocks of `layout` and adds the
/// inter-period growth `d_ln_gdppc` = ln ȳ_p − ln ȳ_{p−1} when `gdppc`
/// exists.
pub fn period_average(panel: &RegionPanel, layout: BlockLayout) -> Result<PeriodPanel> {
    if layout.years == 0 {
        return Err(Error::InvalidInput("block length must be positive".into()));
    }
    let levels = panel.time_levels();
    let (first, last) = match (levels.first(), levels.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::InsufficientData("empty panel".into())),
    };
    let blocks = layout.blocks(first, last);
    if blocks.is_empty() {
        return Err(Error::InsufficientData(format!(
            "panel spans {first}-{last}, shorter than one {}-year block",
            layout.years
        )));
    }
    let names: Vec<String> =
        panel.column_names().filter(|n| !is_derived(n)).map(str::to_string).collect();
    let cols: Vec<&[f64]> = names.iter().map(|n| panel.column(n)).collect::<Result<_>>()?;

    let mut region = Vec::new();
    let mut country = Vec::new();
    let mut continent = Vec::new();
    let mut time = Vec::new();
    let mut means: BTreeMap<String, Vec<f64>> =
        names.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut starts = Vec::new();
    let mut ends = Vec::new();
    let mut dropped = Vec::new();

    for range in panel.region_blocks() {
        for (p, &(s, e)) in blocks.iter().enumerate() {
            let rows: Vec<usize> =
                range.clone().filter(|&i| (s..=e).contains(&panel.time()[i])).collect();
            if rows.len() != (e - s + 1) as usize {
                if !rows.is_empty() {
                    dropped.push((panel.region()[range.start].clone(), s));
                }
                continue;
            }
            let r0 = rows[0];
            region.push(panel.region()[r0].clone());
            country.push(panel.country()[r0].clone());
            continent.push(panel.continent()[r0].clone());
            time.push(p as i32);
            starts.push(s as f64);
            ends.push(e as f64);
            for (name, col) in names.iter().zip(&cols) {
                let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / rows.len() as f64;
                means.get_mut(name).expect("column").push(mean);
            }
        }
    }
    if !dropped.is_empty() {
        log::warn!("period_average: {} incomplete region-periods dropped", dropped.len());
    }
    means.insert("period_start".into(), starts);
    means.insert("period_end".into(), ends);
    let mut out = RegionPanel::from_parts(region, country, continent, time, "period", means);
    let layout_note = blocks
        .iter()
        .map(|(s, e)| format!("{s}-{e}"))
        .collect::<Vec<_>>()
        .join(",");
    out.notes.push(format!("period blocks: {layout_note}"));
    if out.has_column("gdppc") {
        out = growth_rates(&out)?;
    }
    out.rename_time("period");
    Ok(PeriodPanel { panel: out, layout, blocks, dropped })
}

/// Inter-period differences and interactions (one-period gap). Rows without
/// an adjacent previous period are not emitted.
pub fn long_difference(period: &PeriodPanel, lag_form: LagForm) -> Result<RegionPanel> {
    let with_terms = weather_terms(&period.panel, lag_form)?;
    let keep: Vec<usize> = (0..with_terms.len())
        .filter(|&i| with_terms.lag_index(i, 1).is_some())
        .collect();
    let mut out = with_terms.select_rows(&keep);
    if !out.has_column(GROWTH) && period.panel.has_column("gdppc") {
        out = growth_rates(&out)?;
    }
    Ok(out)
}

/// Coding of the income-group dummy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RichPoorCoding {
    /// Column `poor`: 1 for poor regions, 0 for rich.
    #[default]
    PoorIsOne,
    /// Column `rich`: 1 for rich regions, 0 for poor.
    RichIsOne,
}

impl RichPoorCoding {
    pub fn column_name(self) -> &'static str {
        match self {
            RichPoorCoding::PoorIsOne => "poor",
            RichPoorCoding::RichIsOne => "rich",
        }
    }
}

/// Lower weighted median: the smallest value whose cumulative weight
/// reaches half of the total.
pub(crate) fn weighted_median(values: &[f64], weights: &[f64]) -> Option<f64> {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.retain(|(v, w)| v.is_finite() && *w > 0.0);
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= 0.5 * total * (1.0 - 1e-12) {
            return Some(*v);
        }
    }
    pairs.last().map(|p| p.0)
}

/// Splits regions, separately in each block of `layout` (10 years by
/// default), at the region-weighted median of block-average GDP per capita.
/// Regions at or below the median are poor. Annual rows outside any
/// complete block get `NaN`.
pub fn classify_rich_poor(
    panel: &RegionPanel,
    layout: BlockLayout,
    coding: RichPoorCoding,
) -> Result<RegionPanel> {
    let avg = period_average(panel, layout)?;
    let gdp = avg.panel.column("gdppc")?;
    let country = avg.panel.factor_codes("country")?;
    let present: Vec<bool> = gdp.iter().map(|v| v.is_finite()).collect();
    let w = region_weights(&country, avg.panel.time(), &present);

    let mut status: HashMap<(String, i32), bool> = HashMap::new();
    for (p, &(s, _)) in avg.blocks.iter().enumerate() {
        let rows: Vec<usize> =
            (0..avg.panel.len()).filter(|&i| avg.panel.time()[i] == p as i32).collect();
        let vals: Vec<f64> = rows.iter().map(|&i| gdp[i]).collect();
        let ws: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
        let Some(median) = weighted_median(&vals, &ws) else { continue };
        for &i in &rows {
            if gdp[i].is_finite() {
                let poor = gdp[i] <= median;
                status.insert((avg.panel.region()[i].clone(), s), poor);
            }
        }
    }

    let dummy: Vec<f64> = (0..panel.len())
        .map(|i| {
            let t = panel.time()[i];
            let block = avg.blocks.iter().find(|(s, e)| (*s..=*e).contains(&t));
            match block.and_then(|(s, _)| status.get(&(panel.region()[i].clone(), *s))) {
                Some(&poor) => match coding {
                    RichPoorCoding::PoorIsOne => f64::from(u8::from(poor)),
                    RichPoorCoding::RichIsOne => f64::from(u8::from(!poor)),
                },
                None => f64::NAN,
            }
        })
        .collect();
    let mut out = panel.clone();
    out.set_column(coding.column_name(), dummy)?;
    Ok(out)
}
