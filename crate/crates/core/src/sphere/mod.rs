//! Spherical geometry, spatial indexing and the neighbors join.
//!
//! All geometry is done on 3-D unit vectors so nothing degenerates at the
//! poles or across ra = 0. A [`SpatialIndex`] pairs a kd-tree (for cones,
//! polygons and pair joins) with a declination zone table (for dec bands
//! and coarse pre-filtering of partitioned scans).

mod geometry;
mod kdtree;
mod zones;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use geometry::{angular_distance, chord_of_angle, validate_radec, Halfspace, Region, UnitVec};
pub use kdtree::{KdTree, Node, QueryResult, DEFAULT_BUCKET};
pub use zones::{zone_count, zone_of, ZoneTable};

use crate::error::{require_positive, Error, Result};
use crate::units::{arcsec_to_rad, rad_to_arcsec};

/// Relative slack on the inclusive separation boundary, so that a pair
/// constructed at exactly θmax is not lost to rounding in the unit
/// conversions.
pub const BOUNDARY_REL_TOL: f64 = 1e-12;

/// Inclusive separation test shared by the join and any reference check.
pub fn within_separation(angle_rad: f64, max_rad: f64) -> bool {
    angle_rad <= max_rad * (1.0 + BOUNDARY_REL_TOL)
}

/// kd-tree plus zone table over one catalog of `(id, ra, dec)` positions.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    tree: KdTree,
    zones: ZoneTable,
    ids: Vec<u64>,
    decs: Vec<f64>,
}

impl SpatialIndex {
    pub fn build(entries: &[(u64, f64, f64)], zone_height_deg: f64, bucket: usize) -> Result<Self> {
        let mut items = Vec::with_capacity(entries.len());
        for &(id, ra, dec) in entries {
            items.push((id, UnitVec::from_radec(ra, dec)?));
        }
        let zones = ZoneTable::build(entries.iter().map(|e| e.2), zone_height_deg)?;
        Ok(Self {
            tree: KdTree::build(items, bucket),
            zones,
            ids: entries.iter().map(|e| e.0).collect(),
            decs: entries.iter().map(|e| e.2).collect(),
        })
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn zones(&self) -> &ZoneTable {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids whose declination lies in `[lo, hi)`, via the zone table.
    pub fn dec_band(&self, lo_deg: f64, hi_deg: f64) -> Vec<u64> {
        self.zones
            .dec_band(&self.decs, lo_deg, hi_deg)
            .into_iter()
            .map(|i| self.ids[i])
            .collect()
    }
}

/// Ids inside `region`, sorted ascending.
pub fn region_search(index: &SpatialIndex, region: &Region) -> Result<Vec<u64>> {
    region.validate()?;
    let mut ids = index.tree.region_search(region).ids;
    ids.sort_unstable();
    Ok(ids)
}

/// Same as [`region_search`] but also reports how many exact point tests ran.
pub fn region_search_counted(index: &SpatialIndex, region: &Region) -> Result<QueryResult> {
    region.validate()?;
    let mut r = index.tree.region_search(region);
    r.ids.sort_unstable();
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborPair {
    pub id_a: u64,
    pub id_b: u64,
    pub separation_arcsec: f64,
}

#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    /// Ordered pairs sorted by `(id_a, id_b)`; both orientations present.
    pub pairs: Vec<NeighborPair>,
    /// Exact separations computed.
    pub distance_evaluations: u64,
}

/// All ordered pairs of distinct catalog entries within `theta_max_arcsec`
/// (inclusive). Entries at identical positions pair with each other.
pub fn neighbors_join(catalog: &[(u64, UnitVec)], theta_max_arcsec: f64) -> Result<NeighborTable> {
    require_positive("theta_max", theta_max_arcsec)?;
    let mut seen = HashSet::with_capacity(catalog.len());
    if let Some(&(dup, _)) = catalog.iter().find(|(id, _)| !seen.insert(*id)) {
        return Err(Error::validation(format!("duplicate catalog id {dup}")));
    }
    let tree = KdTree::build(catalog.iter().copied(), DEFAULT_BUCKET);
    let max_rad = arcsec_to_rad(theta_max_arcsec);
    let chord = chord_of_angle(max_rad * (1.0 + BOUNDARY_REL_TOL));
    let points = tree.points();
    let ids = tree.ids();
    let mut pairs = Vec::new();
    let mut evaluations = 0;
    for i in 0..points.len() {
        let p = points[i];
        tree.for_each_candidate(p, chord * chord, |j| {
            if j <= i {
                return;
            }
            evaluations += 1;
            let d = p.angle_to(points[j]);
            if within_separation(d, max_rad) {
                let sep = rad_to_arcsec(d);
                pairs.push(NeighborPair { id_a: ids[i], id_b: ids[j], separation_arcsec: sep });
                pairs.push(NeighborPair { id_a: ids[j], id_b: ids[i], separation_arcsec: sep });
            }
        });
    }
    pairs.sort_unstable_by_key(|p| (p.id_a, p.id_b));
    Ok(NeighborTable { pairs, distance_evaluations: evaluations })
}
