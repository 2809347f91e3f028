//! Minimal GeoJSON reader: a `FeatureCollection` whose features carry
//! `region_id` and `country_id` properties and a `Polygon` or
//! `MultiPolygon` geometry. Other geometry types are rejected; extra
//! coordinate dimensions and unknown members are ignored.

use std::io::Read;

use serde_json::Value;

use super::RegionShape;
use crate::error::{Error, Result};

fn id(props: &Value, key: &str, feature: usize) -> Result<String> {
    match props.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(Error::InvalidInput(format!("feature {feature}: missing `{key}` property"))),
    }
}

fn ring(v: &Value, feature: usize) -> Result<Vec<[f64; 2]>> {
    let bad = || Error::InvalidInput(format!("feature {feature}: malformed coordinates"));
    v.as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|p| {
            let p = p.as_array().ok_or_else(bad)?;
            match (p.first().and_then(Value::as_f64), p.get(1).and_then(Value::as_f64)) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => Err(bad()),
            }
        })
        .collect()
}

fn polygon(v: &Value, feature: usize) -> Result<Vec<Vec<[f64; 2]>>> {
    v.as_array()
        .ok_or_else(|| Error::InvalidInput(format!("feature {feature}: polygon is not an array")))?
        .iter()
        .map(|r| ring(r, feature))
        .collect()
}

pub fn read_regions_geojson<R: Read>(reader: R) -> Result<Vec<RegionShape>> {
    let doc: Value = serde_json::from_reader(reader)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::InvalidInput("expected a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("FeatureCollection without features".into()))?;
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties").unwrap_or(&Value::Null);
        let geom = f
            .get("geometry")
            .ok_or_else(|| Error::InvalidInput(format!("feature {i}: no geometry")))?;
        let coords = geom.get("coordinates").unwrap_or(&Value::Null);
        let rings = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => polygon(coords, i)?,
            Some("MultiPolygon") => {
                let parts = coords
                    .as_array()
                    .ok_or_else(|| Error::InvalidInput(format!("feature {i}: malformed MultiPolygon")))?;
                let mut rings = Vec::new();
                for p in parts {
                    rings.extend(polygon(p, i)?);
                }
                rings
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "feature {i}: unsupported geometry {}",
                    other.unwrap_or("(none)")
                )))
            }
        };
        let shape = RegionShape::new(id(props, "region_id", i)?, id(props, "country_id", i)?, rings);
        shape.validate()?;
        out.push(shape);
    }
    Ok(out)
}
