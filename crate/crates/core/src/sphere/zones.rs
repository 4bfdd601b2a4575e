//! Constant-height declination zones.

use std::collections::BTreeMap;

use crate::error::{require_positive, Result};

/// Zone id of a declination: `floor((dec + 90) / height)`. The north pole
/// is folded into the last zone so every valid declination has exactly one
/// zone.
pub fn zone_of(dec_deg: f64, zone_height_deg: f64) -> u32 {
    let last = zone_count(zone_height_deg) - 1;
    let z = ((dec_deg + 90.0) / zone_height_deg).floor();
    if z <= 0.0 {
        0
    } else {
        (z as u32).min(last)
    }
}

pub fn zone_count(zone_height_deg: f64) -> u32 {
    ((180.0 / zone_height_deg).ceil() as u32).max(1)
}

/// Zone id → positions (into the caller's point array) of its members.
#[derive(Debug, Clone)]
pub struct ZoneTable {
    height: f64,
    zones: BTreeMap<u32, Vec<usize>>,
}

impl ZoneTable {
    pub fn build(decs: impl IntoIterator<Item = f64>, zone_height_deg: f64) -> Result<Self> {
        require_positive("zone_height", zone_height_deg)?;
        let mut zones: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, dec) in decs.into_iter().enumerate() {
            zones.entry(zone_of(dec, zone_height_deg)).or_default().push(i);
        }
        Ok(Self { height: zone_height_deg, zones })
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        self.zones.iter().map(|(&z, v)| (z, v.len())).collect()
    }

    /// Candidate positions whose zone intersects `[lo, hi]` degrees.
    pub fn candidates(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        let zl = zone_of(lo.max(-90.0), self.height);
        let zh = zone_of(hi.min(90.0), self.height);
        self.zones.range(zl..=zh).flat_map(|(_, v)| v.iter().copied())
    }

    /// Positions with `lo <= dec < hi`, using the zone table as a pre-filter.
    pub fn dec_band(&self, decs: &[f64], lo: f64, hi: f64) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .candidates(lo, hi)
            .filter(|&i| decs[i] >= lo && decs[i] < hi)
            .collect();
        out.sort_unstable();
        out
    }
}
