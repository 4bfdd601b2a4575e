//! Partitioned detection store.
//!
//! A store is a directory of fixed-width `part-NNNN.det` partition files
//! plus `manifest.json`. Records are spread round-robin over partitions in
//! `(zone, det_id)` order, so every partition covers the whole sky and is
//! itself sorted by zone. The zone index (`index.json`) records each
//! partition's contiguous zone ranges, which lets region scans read only
//! the declination band they need.

pub mod master;
pub mod predicate;
pub mod record;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::sphere::{zone_of, Region};

pub use master::{build_master, Classification, MasterCatalog, MasterObject};
pub use predicate::{CmpOp, Comparison, Field, Predicate};
pub use record::{Detection, RECORD_SIZE};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.json";
pub const DEFAULT_ZONE_HEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionInfo {
    pub file: String,
    pub records: u64,
    pub crc32c: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationParams {
    pub partition_count: usize,
    pub source: String,
    pub load_seconds: f64,
    /// Bytes written per second of ingest wall time.
    pub load_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub file: String,
    pub index_bytes: u64,
    /// Index bytes over data bytes.
    pub index_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSummary {
    pub file: String,
    pub match_radius_arcsec: f64,
    pub masters: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema_version: u32,
    pub record_size: usize,
    pub total_records: u64,
    pub zone_height: f64,
    pub partitions: Vec<PartitionInfo>,
    pub created: CreationParams,
    pub index: Option<IndexSummary>,
    pub master: Option<MasterSummary>,
}

impl StoreManifest {
    pub fn data_bytes(&self) -> u64 {
        self.total_records * self.record_size as u64
    }
}

/// One partition's entry in the zone index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionIndex {
    /// `(zone, first_record, count)`, ascending by zone.
    pub zone_ranges: Vec<(u32, u64, u64)>,
    pub mjd_min: Option<f64>,
    pub mjd_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneIndex {
    pub zone_height: f64,
    pub partitions: Vec<PartitionIndex>,
}

impl ZoneIndex {
    /// Records per zone summed over partitions.
    pub fn histogram(&self) -> BTreeMap<u32, u64> {
        let mut h = BTreeMap::new();
        for p in &self.partitions {
            for &(z, _, n) in &p.zone_ranges {
                *h.entry(z).or_insert(0) += n;
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
    manifest: StoreManifest,
}

fn partition_name(i: usize) -> String {
    format!("part-{i:04}.det")
}

fn encode_partition(records: &[Detection]) -> Vec<u8> {
    let mut buf = vec![0u8; records.len() * RECORD_SIZE];
    for (r, chunk) in records.iter().zip(buf.chunks_exact_mut(RECORD_SIZE)) {
        r.encode(chunk.try_into().unwrap());
    }
    buf
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest: StoreManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.schema_version != SCHEMA_VERSION || manifest.record_size != RECORD_SIZE {
            return Err(Error::Corrupt(format!(
                "unsupported schema {} / record size {}",
                manifest.schema_version, manifest.record_size
            )));
        }
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn partition_count(&self) -> usize {
        self.manifest.partitions.len()
    }

    pub fn partition_path(&self, i: usize) -> PathBuf {
        self.dir.join(&self.manifest.partitions[i].file)
    }

    pub fn read_partition(&self, i: usize) -> Result<Vec<Detection>> {
        record::decode_all(&std::fs::read(self.partition_path(i))?)
    }

    /// All records in `(partition, offset)` order.
    pub fn read_all(&self) -> Result<Vec<Detection>> {
        let mut out = Vec::with_capacity(self.manifest.total_records as usize);
        for i in 0..self.partition_count() {
            out.extend(self.read_partition(i)?);
        }
        Ok(out)
    }

    /// Re-reads every partition and checks sizes and CRC-32C checksums.
    pub fn verify(&self) -> Result<()> {
        let mut total = 0;
        for (i, p) in self.manifest.partitions.iter().enumerate() {
            let bytes = std::fs::read(self.partition_path(i))?;
            if bytes.len() as u64 != p.records * RECORD_SIZE as u64 {
                return Err(Error::Corrupt(format!(
                    "{}: {} bytes, manifest expects {} records",
                    p.file,
                    bytes.len(),
                    p.records
                )));
            }
            let crc = crc32c::crc32c(&bytes);
            if crc != p.crc32c {
                return Err(Error::Corrupt(format!(
                    "{}: checksum {crc:08x} != manifest {:08x}",
                    p.file, p.crc32c
                )));
            }
            total += p.records;
        }
        if total != self.manifest.total_records {
            return Err(Error::Corrupt(format!(
                "partition counts sum to {total}, manifest total is {}",
                self.manifest.total_records
            )));
        }
        Ok(())
    }

    fn write_manifest(&self) -> Result<()> {
        std::fs::write(self.dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }

    /// Rewrites partition `i` and refreshes its manifest entry (the manifest
    /// file itself is written by the caller).
    fn rewrite_partition(&mut self, i: usize, records: &[Detection]) -> Result<()> {
        let bytes = encode_partition(records);
        std::fs::write(self.partition_path(i), &bytes)?;
        let info = &mut self.manifest.partitions[i];
        info.records = records.len() as u64;
        info.crc32c = crc32c::crc32c(&bytes);
        Ok(())
    }

    pub fn load_index(&self) -> Result<Option<ZoneIndex>> {
        match &self.manifest.index {
            None => Ok(None),
            Some(s) => Ok(Some(serde_json::from_slice(&std::fs::read(self.dir.join(&s.file))?)?)),
        }
    }

    pub fn load_masters(&self) -> Result<Option<MasterCatalog>> {
        match &self.manifest.master {
            None => Ok(None),
            Some(s) => Ok(Some(MasterCatalog::read_csv(&self.dir.join(&s.file), s.match_radius_arcsec)?)),
        }
    }
}

/// Validates and ingests `records` into a new store at `out`.
pub fn ingest_detections(
    records: Vec<Detection>,
    partition_count: usize,
    out: impl AsRef<Path>,
    zone_height_deg: f64,
    source: &str,
) -> Result<StoreManifest> {
    let start = Instant::now();
    if partition_count < 1 {
        return Err(Error::validation("partition_count must be at least 1"));
    }
    require_positive("zone_height", zone_height_deg)?;
    let mut seen = HashSet::with_capacity(records.len());
    let mut records = records;
    for (ordinal, r) in records.iter_mut().enumerate() {
        r.validate().map_err(|reason| Error::MalformedRecord { ordinal: ordinal as u64, reason })?;
        if !seen.insert(r.det_id) {
            return Err(Error::MalformedRecord {
                ordinal: ordinal as u64,
                reason: format!("duplicate det_id {}", r.det_id),
            });
        }
        r.zone = zone_of(r.dec, zone_height_deg);
    }
    drop(seen);
    records.sort_unstable_by_key(|r| (r.zone, r.det_id));

    let mut parts: Vec<Vec<Detection>> = vec![Vec::with_capacity(records.len() / partition_count + 1); partition_count];
    for (k, r) in records.into_iter().enumerate() {
        parts[k % partition_count].push(r);
    }

    let dir = out.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut infos = Vec::with_capacity(partition_count);
    let mut total = 0u64;
    for (i, part) in parts.iter().enumerate() {
        let bytes = encode_partition(part);
        let name = partition_name(i);
        std::fs::write(dir.join(&name), &bytes)?;
        infos.push(PartitionInfo { file: name, records: part.len() as u64, crc32c: crc32c::crc32c(&bytes) });
        total += part.len() as u64;
    }
    let elapsed = start.elapsed().as_secs_f64().max(1e-9);
    let manifest = StoreManifest {
        schema_version: SCHEMA_VERSION,
        record_size: RECORD_SIZE,
        total_records: total,
        zone_height: zone_height_deg,
        partitions: infos,
        created: CreationParams {
            partition_count,
            source: source.to_string(),
            load_seconds: elapsed,
            load_rate: (total * RECORD_SIZE as u64) as f64 / elapsed,
        },
        index: None,
        master: None,
    };
    let store = Store { dir: dir.to_path_buf(), manifest };
    store.write_manifest()?;
    Ok(store.manifest)
}

/// Reads a detection stream in the binary record format and ingests it.
pub fn ingest_file(
    input: impl AsRef<Path>,
    partition_count: usize,
    out: impl AsRef<Path>,
    zone_height_deg: f64,
) -> Result<StoreManifest> {
    let input = input.as_ref();
    let mut bytes = Vec::new();
    File::open(input)?.read_to_end(&mut bytes)?;
    let records = record::decode_all(&bytes)?;
    ingest_detections(records, partition_count, out, zone_height_deg, &input.display().to_string())
}

/// Recomputes zones at `zone_height_deg`, re-sorts each partition by
/// `(zone, det_id)` and writes the zone/epoch index.
pub fn build_indexes(store: &mut Store, zone_height_deg: f64) -> Result<ZoneIndex> {
    require_positive("zone_height", zone_height_deg)?;
    let mut partitions = Vec::with_capacity(store.partition_count());
    for i in 0..store.partition_count() {
        let mut recs = store.read_partition(i)?;
        for r in &mut recs {
            r.zone = zone_of(r.dec, zone_height_deg);
        }
        recs.sort_unstable_by_key(|r| (r.zone, r.det_id));
        let mut zone_ranges: Vec<(u32, u64, u64)> = Vec::new();
        for (k, r) in recs.iter().enumerate() {
            match zone_ranges.last_mut() {
                Some(last) if last.0 == r.zone => last.2 += 1,
                _ => zone_ranges.push((r.zone, k as u64, 1)),
            }
        }
        let mjd_min = recs.iter().map(|r| r.mjd).reduce(f64::min);
        let mjd_max = recs.iter().map(|r| r.mjd).reduce(f64::max);
        store.rewrite_partition(i, &recs)?;
        partitions.push(PartitionIndex { zone_ranges, mjd_min, mjd_max });
    }
    let index = ZoneIndex { zone_height: zone_height_deg, partitions };
    let bytes = serde_json::to_vec(&index)?;
    std::fs::write(store.dir.join(INDEX_FILE), &bytes)?;
    let data = store.manifest.data_bytes().max(1) as f64;
    store.manifest.zone_height = zone_height_deg;
    store.manifest.index = Some(IndexSummary {
        file: INDEX_FILE.to_string(),
        index_bytes: bytes.len() as u64,
        index_fraction: bytes.len() as f64 / data,
    });
    store.write_manifest()?;
    Ok(index)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScanStats {
    pub bytes_read: u64,
    pub records_scanned: u64,
    pub records_matched: u64,
    pub wall_seconds: f64,
    /// `bytes_read / wall_seconds`.
    pub rate: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ScanOutput {
    /// Matches in `(partition, offset)` order.
    pub records: Vec<Detection>,
    pub stats: ScanStats,
}

struct PartitionScan {
    records: Vec<Detection>,
    bytes: u64,
    scanned: u64,
}

fn scan_partition(
    store: &Store,
    i: usize,
    index: Option<&PartitionIndex>,
    zone_window: Option<(u32, u32)>,
    predicate: &Predicate,
    region: Option<&Region>,
) -> Result<PartitionScan> {
    let path = store.partition_path(i);
    let bytes = match (index, zone_window) {
        (Some(pi), Some((zl, zh))) => {
            let inside: Vec<&(u32, u64, u64)> =
                pi.zone_ranges.iter().filter(|r| r.0 >= zl && r.0 <= zh).collect();
            match (inside.first(), inside.last()) {
                (Some(first), Some(last)) => {
                    let start = first.1 * RECORD_SIZE as u64;
                    let end = (last.1 + last.2) * RECORD_SIZE as u64;
                    let mut f = File::open(&path)?;
                    f.seek(SeekFrom::Start(start))?;
                    let mut buf = vec![0u8; (end - start) as usize];
                    f.read_exact(&mut buf)?;
                    buf
                }
                _ => Vec::new(),
            }
        }
        _ => std::fs::read(&path)?,
    };
    let mut out = PartitionScan { records: Vec::new(), bytes: bytes.len() as u64, scanned: 0 };
    for chunk in bytes.chunks_exact(RECORD_SIZE) {
        out.scanned += 1;
        let d = Detection::decode(chunk);
        if predicate.matches(&d) && region.is_none_or(|r| r.contains(d.position())) {
            out.records.push(d);
        }
    }
    Ok(out)
}

/// Full sequential scan with predicate and optional region, spread over a
/// pool of `workers` threads that each take whole partitions.
pub fn scan(store: &Store, predicate: &Predicate, region: Option<&Region>, workers: usize) -> Result<ScanOutput> {
    if workers < 1 {
        return Err(Error::validation("workers must be at least 1"));
    }
    if let Some(r) = region {
        r.validate()?;
    }
    let index = match region {
        Some(_) => store.load_index()?,
        None => None,
    };
    let zone_window = region.map(|r| {
        let (lo, hi) = r.dec_bounds();
        (zone_of(lo, store.manifest.zone_height), zone_of(hi, store.manifest.zone_height))
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let parts: Vec<Result<PartitionScan>> = pool.install(|| {
        (0..store.partition_count())
            .into_par_iter()
            .map(|i| {
                scan_partition(store, i, index.as_ref().map(|x| &x.partitions[i]), zone_window, predicate, region)
            })
            .collect()
    });
    let wall = start.elapsed().as_secs_f64();
    let mut out = ScanOutput::default();
    for p in parts {
        let p = p?;
        out.stats.bytes_read += p.bytes;
        out.stats.records_scanned += p.scanned;
        out.records.extend(p.records);
    }
    out.stats.records_matched = out.records.len() as u64;
    out.stats.wall_seconds = wall;
    out.stats.rate = out.stats.bytes_read as f64 / wall.max(1e-9);
    out.stats.workers = workers;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skygen::{generate_survey, SurveyConfig};

    fn survey(n: u64, passes: u32) -> Vec<Detection> {
        generate_survey(&SurveyConfig { n_objects: n, passes, seed: 11, ..Default::default() })
            .unwrap()
            .detections
    }

    #[test]
    fn ingest_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let m = ingest_detections(survey(100, 10), 4, dir.path(), 1.0, "test").unwrap();
        assert_eq!(m.total_records, 1000);
        let bytes: u64 = (0..4)
            .map(|i| std::fs::metadata(dir.path().join(partition_name(i))).unwrap().len())
            .sum();
        assert_eq!(bytes, 64_000);
        assert!(m.created.load_rate > 0.0);
        Store::open(dir.path()).unwrap().verify().unwrap();
    }

    #[test]
    fn empty_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let m = ingest_detections(Vec::new(), 3, dir.path(), 1.0, "empty").unwrap();
        assert_eq!(m.total_records, 0);
        assert_eq!(m.partitions.len(), 3);
        let store = Store::open(dir.path()).unwrap();
        store.verify().unwrap();
        assert!(scan(&store, &Predicate::always(), None, 2).unwrap().records.is_empty());
    }

    #[test]
    fn malformed_record_reports_ordinal() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = survey(10, 1);
        recs[7].flux_err = -1.0;
        match ingest_detections(recs, 2, dir.path(), 1.0, "bad") {
            Err(Error::MalformedRecord { ordinal, .. }) => assert_eq!(ordinal, 7),
            other => panic!("unexpected {other:?}"),
        }
        let mut recs = survey(10, 1);
        recs[5].det_id = recs[2].det_id;
        assert!(matches!(
            ingest_detections(recs, 2, dir.path(), 1.0, "dup"),
            Err(Error::MalformedRecord { ordinal: 5, .. })
        ));
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        ingest_detections(survey(50, 4), 2, dir.path(), 1.0, "t").unwrap();
        let store = Store::open(dir.path()).unwrap();
        let path = store.partition_path(1);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[100] ^= 0x01;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(store.verify(), Err(Error::Corrupt(_))));
    }

    #[test]
    fn index_assigns_zones() {
        let dir = tempfile::tempdir().unwrap();
        let recs = survey(300, 3);
        ingest_detections(recs.clone(), 4, dir.path(), 2.0, "t").unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let idx = build_indexes(&mut store, 1.0).unwrap();
        store.verify().unwrap();
        let all = store.read_all().unwrap();
        assert_eq!(all.len(), recs.len());
        for r in &all {
            assert_eq!(r.zone, zone_of(r.dec, 1.0));
        }
        assert_eq!(idx.histogram().values().sum::<u64>(), recs.len() as u64);
        assert!(store.manifest().index.as_ref().unwrap().index_fraction > 0.0);
        assert!(build_indexes(&mut store, 0.0).is_err());
    }

    #[test]
    fn scan_edge_predicates() {
        let dir = tempfile::tempdir().unwrap();
        ingest_detections(survey(200, 5), 4, dir.path(), 1.0, "t").unwrap();
        let store = Store::open(dir.path()).unwrap();
        let all = scan(&store, &Predicate::always(), None, 2).unwrap();
        assert_eq!(all.records.len(), 1000);
        let none = scan(&store, &Predicate::never(), None, 2).unwrap();
        assert!(none.records.is_empty());
        assert_eq!(none.stats.bytes_read, 64_000);
        assert_eq!(none.stats.records_scanned, 1000);
        assert!(scan(&store, &Predicate::always(), None, 0).is_err());
    }

    #[test]
    fn region_scan_uses_zone_window() {
        let dir = tempfile::tempdir().unwrap();
        let recs = survey(2000, 2);
        ingest_detections(recs.clone(), 4, dir.path(), 1.0, "t").unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        build_indexes(&mut store, 1.0).unwrap();
        let region = Region::cone_deg(40.0, 10.0, 8.0).unwrap();
        let out = scan(&store, &Predicate::always(), Some(&region), 3).unwrap();
        let mut got: Vec<u64> = out.records.iter().map(|r| r.det_id).collect();
        got.sort_unstable();
        let mut want: Vec<u64> = recs.iter().filter(|r| region.contains(r.position())).map(|r| r.det_id).collect();
        want.sort_unstable();
        assert_eq!(got, want);
        assert!(out.stats.bytes_read < 64 * recs.len() as u64);
    }
}
