use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{PanelRow, RegionPanel};
use crate::error::{Error, Result};

const ID_COLUMNS: [&str; 3] = ["region_id", "country_id", "continent_id"];

fn parse_value(raw: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") || s == "." {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("cannot parse `{s}` as a number")))
}

/// Reads a panel CSV. Required columns: `region_id`, `country_id` and either
/// `year` or `period`; `continent_id` is optional. Every other column is
/// numeric; empty cells, `NA`, `NaN` and `.` are missing.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<RegionPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let region_ix = find("region_id").ok_or_else(|| Error::MissingColumn("region_id".into()))?;
    let country_ix = find("country_id").ok_or_else(|| Error::MissingColumn("country_id".into()))?;
    let continent_ix = find("continent_id");
    let (time_ix, time_name) = match (find("year"), find("period")) {
        (Some(i), _) => (i, "year"),
        (None, Some(i)) => (i, "period"),
        _ => return Err(Error::MissingColumn("year".into())),
    };
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != time_ix && !ID_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let time = rec[time_ix].trim().parse::<i32>().map_err(|_| {
            Error::InvalidInput(format!("line {}: bad {time_name} `{}`", line + 2, &rec[time_ix]))
        })?;
        let mut values = BTreeMap::new();
        for (i, name) in &value_cols {
            let v = parse_value(rec.get(*i).unwrap_or(""))
                .map_err(|e| Error::InvalidInput(format!("line {}, column {name}: {e}", line + 2)))?;
            values.insert(name.clone(), v);
        }
        rows.push(PanelRow {
            region: rec[region_ix].to_string(),
            country: rec[country_ix].to_string(),
            continent: continent_ix.map(|i| rec[i].to_string()).unwrap_or_default(),
            time,
            values,
        });
    }
    let mut panel = RegionPanel::from_rows(rows, time_name)?;
    // Keep declared columns even if every row left them empty.
    for (_, name) in &value_cols {
        if !panel.has_column(name) {
            panel.set_column(name, vec![f64::NAN; panel.len()])?;
        }
    }
    Ok(panel)
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Shortest representation that round-trips.
        format!("{v:?}")
    }
}

/// Writes a panel CSV with identifier columns first and value columns in
/// name order.
pub fn write_panel_csv<W: Write>(panel: &RegionPanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let names: Vec<&str> = panel.column_names().collect();
    let mut header = vec!["region_id", "country_id", "continent_id", panel.time_name()];
    header.extend(names.iter().copied());
    wtr.write_record(&header)?;
    let cols: Vec<&[f64]> = names.iter().map(|n| panel.column(n)).collect::<Result<_>>()?;
    for i in 0..panel.len() {
        let mut rec = vec![
            panel.region()[i].clone(),
            panel.country()[i].clone(),
            panel.continent()[i].clone(),
            panel.time()[i].to_string(),
        ];
        rec.extend(cols.iter().map(|c| format_value(c[i])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_missing_values() {
        let text = "region_id,country_id,year,gdppc,temp\nA1,A,2000,100,\nA1,A,2001,110.5,NA\n";
        let p = read_panel_csv(text.as_bytes()).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.column("temp").unwrap().iter().all(|v| v.is_nan()));
        let mut out = Vec::new();
        write_panel_csv(&p, &mut out).unwrap();
        let back = read_panel_csv(out.as_slice()).unwrap();
        assert_eq!(back.column("gdppc").unwrap(), &[100.0, 110.5]);
        assert_eq!(back.time_name(), "year");
    }

    #[test]
    fn missing_required_column() {
        let text = "region_id,year\nA1,2000\n";
        assert!(matches!(read_panel_csv(text.as_bytes()), Err(Error::MissingColumn(_))));
    }
}
