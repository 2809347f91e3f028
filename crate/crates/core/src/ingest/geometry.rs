//! Region polygons and centroid assignment.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GridCell;
use crate::error::{Error, Result};

/// A region boundary as a set of closed lon/lat rings. Outer rings and holes
/// are not distinguished: a point is inside when it crosses an odd number of
/// ring edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionShape {
    pub region_id: String,
    pub country_id: String,
    pub rings: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

impl RegionShape {
    pub fn new(region_id: impl Into<String>, country_id: impl Into<String>, rings: Vec<Vec<[f64; 2]>>) -> Self {
        Self { region_id: region_id.into(), country_id: country_id.into(), rings }
    }

    /// Checks that every ring is closed, finite and has at least three
    /// distinct vertices.
    pub fn validate(&self) -> Result<()> {
        if self.rings.is_empty() {
            return Err(Error::InvalidInput(format!("region {} has no rings", self.region_id)));
        }
        for (k, ring) in self.rings.iter().enumerate() {
            let bad = |what: &str| Error::InvalidInput(format!("region {} ring {k}: {what}", self.region_id));
            if ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(bad("non-finite vertex"));
            }
            if ring.len() < 2 || ring.first() != ring.last() {
                return Err(bad("ring is not closed"));
            }
            let distinct: BTreeSet<(u64, u64)> =
                ring.iter().map(|v| (v[0].to_bits(), v[1].to_bits())).collect();
            if distinct.len() < 3 {
                return Err(bad("fewer than 3 distinct vertices"));
            }
        }
        Ok(())
    }

    /// Bounding box as `[min_lon, min_lat, max_lon, max_lat]`.
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for v in self.rings.iter().flatten() {
            b[0] = b[0].min(v[0]);
            b[1] = b[1].min(v[1]);
            b[2] = b[2].max(v[0]);
            b[3] = b[3].max(v[1]);
        }
        b
    }

    pub fn locate(&self, lon: f64, lat: f64) -> Location {
        let mut inside = false;
        for ring in &self.rings {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if on_segment(a, b, lon, lat) {
                    return Location::Boundary;
                }
                if (a[1] > lat) != (b[1] > lat) {
                    let x = a[0] + (lat - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                    if lon < x {
                        inside = !inside;
                    }
                }
            }
        }
        if inside {
            Location::Inside
        } else {
            Location::Outside
        }
    }
}

fn on_segment(a: [f64; 2], b: [f64; 2], x: f64, y: f64) -> bool {
    let cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
    cross == 0.0
        && x >= a[0].min(b[0])
        && x <= a[0].max(b[0])
        && y >= a[1].min(b[1])
        && y <= a[1].max(b[1])
}

/// Maps each cell to the region containing its centroid. A centroid inside
/// or on the boundary of several regions goes to the smallest region id.
/// Cells in no region are left out.
pub fn assign_cells(cells: &[GridCell], regions: &[RegionShape]) -> Result<BTreeMap<String, String>> {
    let mut ids = BTreeSet::new();
    for r in regions {
        r.validate()?;
        if !ids.insert(r.region_id.as_str()) {
            return Err(Error::InvalidInput(format!("region {} defined twice", r.region_id)));
        }
    }
    let mut order: Vec<&RegionShape> = regions.iter().collect();
    order.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    let boxes: Vec<[f64; 4]> = order.iter().map(|r| r.bbox()).collect();
    let hits: Vec<Option<(String, String)>> = cells
        .par_iter()
        .map(|c| {
            order
                .iter()
                .zip(&boxes)
                .find(|(r, b)| {
                    c.lon >= b[0]
                        && c.lon <= b[2]
                        && c.lat >= b[1]
                        && c.lat <= b[3]
                        && r.locate(c.lon, c.lat) != Location::Outside
                })
                .map(|(r, _)| (c.cell_id.clone(), r.region_id.clone()))
        })
        .collect();
    Ok(hits.into_iter().flatten().collect())
}

/// Region to country map of a shape set.
pub fn country_map(regions: &[RegionShape]) -> BTreeMap<String, String> {
    regions.iter().map(|r| (r.region_id.clone(), r.country_id.clone())).collect()
}
