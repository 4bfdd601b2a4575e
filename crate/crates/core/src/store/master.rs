//! Master (summary) catalog: one record per unique sky location, linked to
//! the chain of detections made there.
//!
//! Detections are taken in `(pass_id, mjd, det_id)` order. Each one joins
//! the nearest existing master within the match radius, otherwise it
//! founds a new master. Master positions are the renormalized running sum
//! of member unit vectors. Candidate masters come from a uniform 3-D grid
//! whose cell edge is at least the match chord, so the 27 cells around a
//! detection hold every master that could match.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::sphere::{chord_of_angle, UnitVec};
use crate::units::arcsec_to_rad;

use super::record::Detection;
use super::{Store, MasterSummary};

pub const MASTERS_FILE: &str = "masters.csv";

/// Equidistance tolerance (radians) below which ties go to the lower master id.
pub const TIE_EPS_RAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    #[default]
    Unclassified,
    Static,
    Variable,
    Transient,
    MoverCandidate,
    Defect,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Unclassified => "unclassified",
            Classification::Static => "static",
            Classification::Variable => "variable",
            Classification::Transient => "transient",
            Classification::MoverCandidate => "mover-candidate",
            Classification::Defect => "defect",
        })
    }
}

impl FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unclassified" => Classification::Unclassified,
            "static" => Classification::Static,
            "variable" => Classification::Variable,
            "transient" => Classification::Transient,
            "mover-candidate" => Classification::MoverCandidate,
            "defect" => Classification::Defect,
            _ => return Err(Error::validation(format!("unknown classification {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterObject {
    pub master_id: u64,
    pub ra: f64,
    pub dec: f64,
    pub n_detections: u64,
    pub mean_flux: f64,
    /// Sample variance of member fluxes (0 for single detections).
    pub flux_variance: f64,
    pub mean_flux_err: f64,
    pub first_mjd: f64,
    pub last_mjd: f64,
    /// Bitwise OR of member flags.
    pub flags: u32,
    pub classification: Classification,
}

impl MasterObject {
    pub fn position(&self) -> UnitVec {
        UnitVec::from_radec_unchecked(self.ra, self.dec)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MasterCatalog {
    pub match_radius_arcsec: f64,
    /// Sorted by `master_id`, ids are `1..=len`.
    pub masters: Vec<MasterObject>,
    /// `(det_id, master_id)` for every input detection, sorted by det_id.
    pub links: Vec<(u64, u64)>,
}

impl MasterCatalog {
    pub fn get(&self, master_id: u64) -> Option<&MasterObject> {
        self.masters.get(master_id.checked_sub(1)? as usize).filter(|m| m.master_id == master_id)
    }

    pub fn get_mut(&mut self, master_id: u64) -> Option<&mut MasterObject> {
        self.masters.get_mut(master_id.checked_sub(1)? as usize).filter(|m| m.master_id == master_id)
    }

    /// master_id → member det_ids.
    pub fn chains(&self) -> BTreeMap<u64, Vec<u64>> {
        let mut chains: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for &(det, m) in &self.links {
            chains.entry(m).or_default().push(det);
        }
        chains
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for m in &self.masters {
            w.serialize(m).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads masters back; chain links live in the partition records.
    pub fn read_csv(path: &Path, match_radius_arcsec: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let masters = r
            .deserialize()
            .collect::<std::result::Result<Vec<MasterObject>, _>>()
            .map_err(csv_err)?;
        Ok(Self { match_radius_arcsec, masters, links: Vec::new() })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Corrupt(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone)]
struct Accum {
    sum: [f64; 3],
    pos: UnitVec,
    n: u64,
    mean_flux: f64,
    m2: f64,
    err_sum: f64,
    first_mjd: f64,
    last_mjd: f64,
    flags: u32,
}

type Cell = (i64, i64, i64);

struct Grid {
    edge: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl Grid {
    fn cell(&self, p: UnitVec) -> Cell {
        (
            (p.x / self.edge).floor() as i64,
            (p.y / self.edge).floor() as i64,
            (p.z / self.edge).floor() as i64,
        )
    }

    fn insert(&mut self, cell: Cell, idx: usize) {
        self.cells.entry(cell).or_default().push(idx);
    }

    fn remove(&mut self, cell: Cell, idx: usize) {
        if let Some(v) = self.cells.get_mut(&cell) {
            v.retain(|&i| i != idx);
        }
    }
}

/// Cross-matches detections into masters. Pure: does not touch any store.
pub fn cross_match(detections: &[Detection], match_radius_arcsec: f64) -> Result<MasterCatalog> {
    require_positive("match_radius", match_radius_arcsec)?;
    let radius = arcsec_to_rad(match_radius_arcsec);
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&detections[a], &detections[b]);
        (x.pass_id, x.mjd, x.det_id)
            .partial_cmp(&(y.pass_id, y.mjd, y.det_id))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    // masters are re-bucketed whenever they move, so an edge of one match
    // chord keeps the 27-cell neighbourhood complete
    let mut grid = Grid { edge: chord_of_angle(radius) * (1.0 + 1e-9) + 1e-15, cells: HashMap::new() };
    let mut masters: Vec<Accum> = Vec::new();
    let mut cells: Vec<Cell> = Vec::new();
    let mut links = Vec::with_capacity(detections.len());

    for &k in &order {
        let d = &detections[k];
        let p = d.position();
        let c = grid.cell(p);
        let mut best: Option<(usize, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(list) = grid.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) else { continue };
                    for &m in list {
                        let dist = masters[m].pos.angle_to(p);
                        if dist > radius {
                            continue;
                        }
                        best = match best {
                            None => Some((m, dist)),
                            Some((bm, bd)) => {
                                if dist < bd - TIE_EPS_RAD || ((dist - bd).abs() <= TIE_EPS_RAD && m < bm) {
                                    Some((m, dist))
                                } else {
                                    Some((bm, bd))
                                }
                            }
                        };
                    }
                }
            }
        }
        let flux = f64::from(d.flux);
        match best {
            Some((m, _)) => {
                let a = &mut masters[m];
                a.sum[0] += p.x;
                a.sum[1] += p.y;
                a.sum[2] += p.z;
                a.pos = UnitVec::new(a.sum[0], a.sum[1], a.sum[2]).unwrap_or(a.pos);
                a.n += 1;
                let delta = flux - a.mean_flux;
                a.mean_flux += delta / a.n as f64;
                a.m2 += delta * (flux - a.mean_flux);
                a.err_sum += f64::from(d.flux_err);
                a.first_mjd = a.first_mjd.min(d.mjd);
                a.last_mjd = a.last_mjd.max(d.mjd);
                a.flags |= d.flags;
                let nc = grid.cell(a.pos);
                if nc != cells[m] {
                    grid.remove(cells[m], m);
                    grid.insert(nc, m);
                    cells[m] = nc;
                }
                links.push((d.det_id, m as u64 + 1));
            }
            None => {
                let idx = masters.len();
                masters.push(Accum {
                    sum: p.as_array(),
                    pos: p,
                    n: 1,
                    mean_flux: flux,
                    m2: 0.0,
                    err_sum: f64::from(d.flux_err),
                    first_mjd: d.mjd,
                    last_mjd: d.mjd,
                    flags: d.flags,
                });
                cells.push(c);
                grid.insert(c, idx);
                links.push((d.det_id, idx as u64 + 1));
            }
        }
    }
    links.sort_unstable();

    let masters = masters
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let (ra, dec) = a.pos.to_radec();
            MasterObject {
                master_id: i as u64 + 1,
                ra,
                dec,
                n_detections: a.n,
                mean_flux: a.mean_flux,
                flux_variance: if a.n > 1 { a.m2 / (a.n - 1) as f64 } else { 0.0 },
                mean_flux_err: a.err_sum / a.n as f64,
                first_mjd: a.first_mjd,
                last_mjd: a.last_mjd,
                flags: a.flags,
                classification: Classification::Unclassified,
            }
        })
        .collect();
    Ok(MasterCatalog { match_radius_arcsec, masters, links })
}

/// Cross-matches every detection in `store`, writes master ids back into
/// the partitions and saves `masters.csv`.
pub fn build_master(store: &mut Store, match_radius_arcsec: f64) -> Result<MasterCatalog> {
    require_positive("match_radius", match_radius_arcsec)?;
    if store.manifest.index.is_none() {
        return Err(Error::validation("store has no index; run build_indexes first"));
    }
    let all = store.read_all()?;
    let catalog = cross_match(&all, match_radius_arcsec)?;
    drop(all);
    let lookup: HashMap<u64, u64> = catalog.links.iter().copied().collect();
    for i in 0..store.partition_count() {
        let mut recs = store.read_partition(i)?;
        for r in &mut recs {
            r.master_id = lookup[&r.det_id];
        }
        store.rewrite_partition(i, &recs)?;
    }
    catalog.write_csv(&store.dir.join(MASTERS_FILE))?;
    store.manifest.master = Some(MasterSummary {
        file: MASTERS_FILE.to_string(),
        match_radius_arcsec,
        masters: catalog.masters.len() as u64,
    });
    store.write_manifest()?;
    Ok(catalog)
}

/// Rewrites `masters.csv` after classification.
pub fn save_masters(store: &Store, catalog: &MasterCatalog) -> Result<()> {
    catalog.write_csv(&store.dir.join(MASTERS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skygen::{generate_survey, SurveyConfig};

    #[test]
    fn clean_survey_gives_one_master_per_object() {
        let cfg = SurveyConfig { n_objects: 200, passes: 12, position_sigma_arcsec: 0.0, ..Default::default() };
        let s = generate_survey(&cfg).unwrap();
        let cat = cross_match(&s.detections, 1.0).unwrap();
        assert_eq!(cat.masters.len(), 200);
        assert!(cat.masters.iter().all(|m| m.n_detections == 12));
    }

    #[test]
    fn single_detection() {
        let d = Detection { det_id: 5, ra: 10.0, dec: -20.0, flux: 3.0, flux_err: 1.0, ..Default::default() };
        let cat = cross_match(&[d], 1.0).unwrap();
        assert_eq!(cat.masters.len(), 1);
        let m = &cat.masters[0];
        assert_eq!(m.n_detections, 1);
        assert!((m.ra - 10.0).abs() < 1e-9 && (m.dec + 20.0).abs() < 1e-9);
        assert_eq!(cat.links, vec![(5, 1)]);
    }

    #[test]
    fn radius_must_be_positive() {
        assert!(cross_match(&[], 0.0).is_err());
    }

    #[test]
    fn chains_partition_and_stay_close() {
        let cfg = SurveyConfig {
            n_objects: 400,
            passes: 10,
            position_sigma_arcsec: 0.3,
            mover_fraction: 0.1,
            transient_fraction: 0.1,
            ..Default::default()
        };
        let s = generate_survey(&cfg).unwrap();
        let cat = cross_match(&s.detections, 1.0).unwrap();
        let total: usize = cat.chains().values().map(Vec::len).sum();
        assert_eq!(total, s.detections.len());
        assert_eq!(cat.links.len(), s.detections.len());
        let radius = arcsec_to_rad(1.0);
        let by_id: HashMap<u64, &Detection> = s.detections.iter().map(|d| (d.det_id, d)).collect();
        for &(det, m) in &cat.links {
            let sep = by_id[&det].position().angle_to(cat.get(m).unwrap().position());
            assert!(sep <= 2.0 * radius);
        }
    }

    #[test]
    fn equidistant_tie_goes_to_lower_id() {
        let mk = |id, pass, ra: f64| Detection { det_id: id, pass_id: pass, ra, dec: 0.0, flux: 1.0, flux_err: 1.0, ..Default::default() };
        let step = 0.8 / 3600.0;
        // two masters 1.6" apart, then a detection exactly between them
        let dets = [mk(1, 0, 10.0 - step), mk(2, 0, 10.0 + step), mk(3, 1, 10.0)];
        let cat = cross_match(&dets, 1.0).unwrap();
        assert_eq!(cat.masters.len(), 2);
        assert_eq!(cat.links[2], (3, 1));
    }
}
