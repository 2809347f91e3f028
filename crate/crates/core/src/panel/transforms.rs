use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{RegionPanel, GROWTH};
use crate::error::Result;

/// Below 0 °C, nine 3 °C bins on [0, 27), and 27 °C or more.
pub const N_TEMP_BINS: usize = 11;
/// Eleven 0.2 m bins on [0, 2.2) and 2.2 m or more.
pub const N_PRECIP_BINS: usize = 12;

/// How the level-effect interaction is formed from the temperature change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagForm {
    /// ΔX·X
    Contemporaneous,
    /// ΔX·L.X
    Lagged,
    /// ΔX·(X + L.X)
    Summed,
}

impl LagForm {
    pub fn interaction_name(self, var: &str) -> String {
        match self {
            LagForm::Contemporaneous => format!("d_{var}_x_{var}"),
            LagForm::Lagged => format!("d_{var}_x_lag_{var}"),
            LagForm::Summed => format!("d_{var}_x_sum_{var}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// 1 / (regions of the country present in that period).
    Region,
    /// Population of the region.
    Population,
}

impl WeightScheme {
    pub fn column_name(self) -> &'static str {
        match self {
            WeightScheme::Region => "w_region",
            WeightScheme::Population => "w_pop",
        }
    }
}

/// Adds `d_ln_gdppc` = ln y_t − ln y_{t−1}. The first observation of each
/// region, rows after a gap and rows touching a nonpositive GDP are `NaN`.
pub fn growth_rates(panel: &RegionPanel) -> Result<RegionPanel> {
    let gdp = panel.column("gdppc")?;
    let ln: Vec<f64> = gdp
        .iter()
        .map(|&y| if y > 0.0 { y.ln() } else { f64::NAN })
        .collect();
    let rejected = gdp.iter().filter(|&&y| y.is_finite() && y <= 0.0).count();
    let g = (0..panel.len())
        .map(|i| match panel.lag_index(i, 1) {
            Some(j) => ln[i] - ln[j],
            None => f64::NAN,
        })
        .collect();
    let mut out = panel.clone();
    out.set_column(GROWTH, g)?;
    if rejected > 0 {
        log::warn!("{rejected} rows with nonpositive gdppc rejected from growth rates");
        out.notes.push(format!("growth_rates: {rejected} nonpositive gdppc rows rejected"));
    }
    Ok(out)
}

/// Adds first differences, squares and the level-effect interaction for
/// `temp` and, when present, `precip`.
pub fn weather_terms(panel: &RegionPanel, lag_form: LagForm) -> Result<RegionPanel> {
    let mut out = panel.clone();
    for var in ["temp", "precip"] {
        if var == "precip" && !panel.has_column(var) {
            continue;
        }
        let x = panel.column(var)?;
        let lagged: Vec<f64> = (0..panel.len())
            .map(|i| panel.lag_index(i, 1).map_or(f64::NAN, |j| x[j]))
            .collect();
        let diff: Vec<f64> = x.iter().zip(&lagged).map(|(a, b)| a - b).collect();
        let inter: Vec<f64> = (0..panel.len())
            .map(|i| match lag_form {
                LagForm::Contemporaneous => diff[i] * x[i],
                LagForm::Lagged => diff[i] * lagged[i],
                LagForm::Summed => diff[i] * (x[i] + lagged[i]),
            })
            .collect();
        out.set_column(&format!("sq_{var}"), x.iter().map(|v| v * v).collect())?;
        out.set_column(&lag_form.interaction_name(var), inter)?;
        out.set_column(&format!("d_{var}"), diff)?;
    }
    Ok(out)
}

/// Temperature bin: 0 below 0 °C, 3 °C interior bins, 10 at or above 27 °C.
pub fn temp_bin(t: f64) -> Option<usize> {
    if !t.is_finite() {
        return None;
    }
    Some((0..=9).filter(|&k| t >= 3.0 * k as f64).count())
}

/// Precipitation bin: 0.2 m bins, 11 at or above 2.2 m.
pub fn precip_bin(p: f64) -> Option<usize> {
    if !p.is_finite() {
        return None;
    }
    // k / 5 is the correctly rounded double for each edge.
    Some((1..=11).filter(|&k| p >= k as f64 / 5.0).count())
}

/// Adds one-hot columns `bin_t_0..bin_t_10` and `bin_p_0..bin_p_11`.
/// Rows with a missing value get `NaN` in every indicator.
pub fn bin_indicators(panel: &RegionPanel) -> Result<RegionPanel> {
    let mut out = panel.clone();
    let specs: [(&str, &str, usize, fn(f64) -> Option<usize>); 2] = [
        ("temp", "bin_t_", N_TEMP_BINS, temp_bin),
        ("precip", "bin_p_", N_PRECIP_BINS, precip_bin),
    ];
    for (var, prefix, nbins, binner) in specs {
        if var == "precip" && !panel.has_column(var) {
            continue;
        }
        let x = panel.column(var)?;
        let assigned: Vec<Option<usize>> = x.iter().map(|&v| binner(v)).collect();
        for b in 0..nbins {
            let col = assigned
                .iter()
                .map(|a| match a {
                    Some(k) if *k == b => 1.0,
                    Some(_) => 0.0,
                    None => f64::NAN,
                })
                .collect();
            out.set_column(&format!("{prefix}{b}"), col)?;
        }
    }
    Ok(out)
}

/// Region-scheme weights over the rows flagged by `present`: each row gets
/// 1 / (number of present rows sharing its country and time). Absent rows
/// get `NaN`.
pub(crate) fn region_weights(country: &[u32], time: &[i32], present: &[bool]) -> Vec<f64> {
    let mut counts: HashMap<(u32, i32), usize> = HashMap::new();
    for i in 0..country.len() {
        if present[i] {
            *counts.entry((country[i], time[i])).or_default() += 1;
        }
    }
    (0..country.len())
        .map(|i| {
            if present[i] {
                1.0 / counts[&(country[i], time[i])] as f64
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Adds `w_region` or `w_pop`.
pub fn compute_weights(panel: &RegionPanel, scheme: WeightScheme) -> Result<RegionPanel> {
    let mut out = panel.clone();
    let w = match scheme {
        WeightScheme::Region => {
            let country = panel.factor_codes("country")?;
            region_weights(&country, panel.time(), &vec![true; panel.len()])
        }
        WeightScheme::Population => {
            let pop = panel.column("pop")?;
            let zero = pop.iter().filter(|&&p| p == 0.0).count();
            if zero > 0 {
                log::warn!("{zero} rows with zero population get weight 0");
                out.notes.push(format!("compute_weights: {zero} zero-population rows weighted 0"));
            }
            pop.iter().map(|&p| if p >= 0.0 { p } else { f64::NAN }).collect()
        }
    };
    out.set_column(scheme.column_name(), w)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::test_support::panel;

    #[test]
    fn growth_closed_forms() {
        let p = panel(&[
            ("a", "C", 2000, &[("gdppc", 100.0)]),
            ("a", "C", 2001, &[("gdppc", 100.0)]),
            ("a", "C", 2002, &[("gdppc", 110.0)]),
        ]);
        let g = growth_rates(&p).unwrap();
        let g = g.column(GROWTH).unwrap();
        assert!(g[0].is_nan());
        assert_eq!(g[1], 0.0);
        assert!((g[2] - 1.1f64.ln()).abs() < 1e-15);
        assert!((g[2] - 0.09531).abs() < 1e-5);
    }

    #[test]
    fn nonpositive_gdp_is_rejected() {
        let p = panel(&[
            ("a", "C", 2000, &[("gdppc", 100.0)]),
            ("a", "C", 2001, &[("gdppc", 0.0)]),
            ("a", "C", 2002, &[("gdppc", 110.0)]),
        ]);
        let g = growth_rates(&p).unwrap();
        let g = g.column(GROWTH).unwrap();
        assert!(g[1].is_nan() && g[2].is_nan());
    }

    #[test]
    fn weather_arithmetic() {
        let p = panel(&[
            ("a", "C", 2000, &[("temp", 10.0)]),
            ("a", "C", 2001, &[("temp", 10.0)]),
            ("a", "C", 2002, &[("temp", 12.0)]),
        ]);
        let c = weather_terms(&p, LagForm::Contemporaneous).unwrap();
        let l = weather_terms(&p, LagForm::Lagged).unwrap();
        let s = weather_terms(&p, LagForm::Summed).unwrap();
        assert_eq!(c.column("d_temp").unwrap()[1], 0.0);
        assert_eq!(c.column("d_temp_x_temp").unwrap()[1], 0.0);
        assert_eq!(c.column("d_temp").unwrap()[2], 2.0);
        assert_eq!(c.column("d_temp_x_temp").unwrap()[2], 24.0);
        assert_eq!(l.column("d_temp_x_lag_temp").unwrap()[2], 20.0);
        assert_eq!(s.column("d_temp_x_sum_temp").unwrap()[2], 44.0);
        assert_eq!(c.column("sq_temp").unwrap()[2], 144.0);
        assert!(c.column("d_temp").unwrap()[0].is_nan());
    }

    #[test]
    fn bin_edges() {
        assert_eq!(temp_bin(-5.0), Some(0));
        assert_eq!(temp_bin(-0.0), Some(1));
        assert_eq!(temp_bin(2.999), Some(1));
        assert_eq!(temp_bin(3.0), Some(2));
        assert_eq!(temp_bin(26.99), Some(9));
        assert_eq!(temp_bin(27.0), Some(N_TEMP_BINS - 1));
        assert_eq!(temp_bin(30.0), Some(N_TEMP_BINS - 1));
        assert_eq!(precip_bin(0.0), Some(0));
        assert_eq!(precip_bin(0.6), Some(3));
        assert_eq!(precip_bin(0.5999999), Some(2));
        assert_eq!(precip_bin(2.2), Some(11));
        assert_eq!(precip_bin(2.1999), Some(10));
        assert_eq!(temp_bin(f64::NAN), None);
    }

    #[test]
    fn region_weights_normalize_per_country_year() {
        let p = panel(&[
            ("a", "C", 2000, &[]),
            ("b", "C", 2000, &[]),
            ("c", "C", 2000, &[]),
            ("d", "C", 2000, &[]),
            ("e", "D", 2000, &[]),
        ]);
        let w = compute_weights(&p, WeightScheme::Region).unwrap();
        let w = w.column("w_region").unwrap();
        assert_eq!(&w[..4], &[0.25; 4]);
        assert_eq!(w[4], 1.0);
    }

    #[test]
    fn population_weights_are_population() {
        let p = panel(&[("a", "C", 2000, &[("pop", 10.0)]), ("b", "C", 2000, &[("pop", 0.0)])]);
        let w = compute_weights(&p, WeightScheme::Population).unwrap();
        assert_eq!(w.column("w_pop").unwrap(), &[10.0, 0.0]);
    }
}
