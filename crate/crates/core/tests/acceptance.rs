//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the report is always shown.
//! The process exits non-zero if any criterion fails, except the scan
//! speed-up criterion on hosts with fewer than 4 hardware threads, where a
//! 4-worker speed-up of 2x cannot physically occur; that line still prints
//! FAIL.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::f64::consts::PI;
use std::time::Instant;

use skyvault::planner::{self, *};
use skyvault::skygen::{advance, generate_survey, ObjectKind, SurveyConfig, SurveyRng};
use skyvault::sphere::{self, Halfspace, Region, SpatialIndex, UnitVec, DEFAULT_BUCKET};
use skyvault::stats::{self, AngularBins, EmConfig, EmMode, PairCountMode};
use skyvault::store::{self, master::cross_match, Detection, MasterCatalog, Predicate, Store};
use skyvault::timedomain::{self, FrequencyGrid, LightCurve, MoverConfig, TriggerConfig};
use skyvault::units::{GB, MB, SECONDS_PER_HOUR, TB};

const PLANNER_TOL: f64 = 0.02;
const MASTER_SIZE_TOL: f64 = 0.25;
const TRANSFER_TOL: f64 = 0.10;
const PLANNER_MAX_SECONDS: f64 = 1.0;
const SPATIAL_MAX_SECONDS: f64 = 30.0;
const SCAN_MIN_SPEEDUP: f64 = 2.0;
const TRIGGER_MIN_PRECISION: f64 = 0.95;
const TRIGGER_MIN_RECALL: f64 = 0.95;
const TRIGGER_MAX_SECONDS: f64 = 10.0;
const PERIOD_TOL: f64 = 0.01;
const MAX_FALSE_VARIABLE_RATE: f64 = 0.05;
const MOVER_MIN_RECOVERY: f64 = 0.90;
const DUAL_TREE_MAX_EVAL_FRACTION: f64 = 0.25;
const NULL_MAX_SIGMAS: f64 = 3.0;
const EM_KD_TOL: f64 = 1e-3;
const EM_K1_TOL: f64 = 1e-12;
const BENCH_MAX_SECONDS: f64 = 60.0;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    waived: Option<String>,
}

fn outcome(name: &'static str, failures: Vec<String>, summary: String) -> Outcome {
    let pass = failures.is_empty();
    let detail = if pass { summary } else { format!("{summary}; {}", failures.join("; ")) };
    Outcome { name, pass, detail, waived: None }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Independent unit-vector conversion for the brute-force oracles.
fn xyz(ra: f64, dec: f64) -> [f64; 3] {
    let (r, d) = (ra.to_radians(), dec.to_radians());
    [d.cos() * r.cos(), d.cos() * r.sin(), d.sin()]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Haversine separation in radians.
fn haversine(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (p1, p2) = (dec1.to_radians(), dec2.to_radians());
    let dp = p2 - p1;
    let dl = (ra2 - ra1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

fn uniform_points(n: usize, seed: u64) -> Vec<UnitVec> {
    let mut rng = SurveyRng::new(seed, 0);
    (0..n).map(|_| rng.unit_vec()).collect()
}

/// Assigns master ids from the catalog links.
fn with_master_ids(dets: &[Detection], cat: &MasterCatalog) -> Vec<Detection> {
    let link: HashMap<u64, u64> = cat.links.iter().copied().collect();
    dets.iter().map(|d| Detection { master_id: link[&d.det_id], ..*d }).collect()
}

fn planner_golden() -> Outcome {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let mut check = |label: &str, got: f64, want: f64, tol: f64| {
        // inclusive: 20.4 against 20 sits exactly on the 2% edge
        if !(rel(got, want) <= tol + 1e-12) {
            fails.push(format!("{label}: {got:.4} vs {want} (tol {tol})"));
        }
    };

    let acq = plan_acquisition(&AcquisitionSpec::default()).unwrap();
    check("TB per pass", acq.bytes_per_pass / TB, 20.0, PLANNER_TOL);
    check("TB per year", acq.bytes_per_year / TB, 1000.0, PLANNER_TOL);
    check("stream MB/s", acq.stream_rate / MB, 170.0, PLANNER_TOL);
    check("CPUs year 0", plan_pipeline(&PipelineSpec::default()).unwrap() as f64, 284.0, 0.0);
    let later = PipelineSpec { years_ahead: 6.0, ..Default::default() };
    check("CPUs year 6", plan_pipeline(&later).unwrap() as f64, 18.0, 0.0);
    let st = plan_storage(&StorageSpec::default()).unwrap();
    check("catalog TB", st.catalog_bytes / TB, 100.0, PLANNER_TOL);
    check("indexed TB", st.indexed_bytes / TB, 120.0, PLANNER_TOL);
    check("coadd TB", st.coadd_bytes / TB, 45.0, PLANNER_TOL);
    check("master TB", st.master_bytes / TB, 4.0, MASTER_SIZE_TOL);
    let scan30 = plan_scan(&ScanSpec { db_bytes: 120.0 * TB, disk_count: 30, per_disk_rate: 150.0 * MB, ..Default::default() }).unwrap();
    check("scan 30 disks h", scan30.scan_seconds / SECONDS_PER_HOUR, 7.4, PLANNER_TOL);
    let scan240 = plan_scan(&ScanSpec { db_bytes: 120.0 * TB, disk_count: 240, per_disk_rate: 150.0 * MB, ..Default::default() }).unwrap();
    check("scan 240 disks h", scan240.scan_seconds / SECONDS_PER_HOUR, 0.93, PLANNER_TOL);
    check("servers for 240 disks", scan240.servers_needed as f64, 8.0, 0.0);
    let master = plan_scan(&ScanSpec { db_bytes: 4.0 * TB, disk_count: 500, per_disk_rate: 150.0 * MB, ..Default::default() }).unwrap();
    check("aggregate GB/s", master.aggregate_rate / GB, 75.0, PLANNER_TOL);
    check("master scan s", master.scan_seconds, 53.0, PLANNER_TOL);
    let net = plan_transfer(&TransferSpec::default()).unwrap();
    check("network days vs 191", net.network_days, 191.0, PLANNER_TOL);
    check("network days vs 200", net.network_days, 200.0, TRANSFER_TOL);
    let boxes = plan_transfer(&TransferSpec { total_bytes: 160.0 * TB, ..Default::default() }).unwrap();
    check("bricks for 160 TB", boxes.brick_count as f64, 5.0, 0.0);
    check("peak load MB/s", planner::peak_load_rate(170.0 * MB, 0.12).unwrap() / MB, 20.0, PLANNER_TOL);
    let secs = t0.elapsed().as_secs_f64();
    if secs >= PLANNER_MAX_SECONDS {
        fails.push(format!("took {secs:.3} s"));
    }
    let summary = format!(
        "scan30 {:.3} h, scan240 {:.3} h, network {:.1} d, master {:.2} TB, {secs:.4} s",
        scan30.scan_seconds / SECONDS_PER_HOUR,
        scan240.scan_seconds / SECONDS_PER_HOUR,
        net.network_days,
        st.master_bytes / TB
    );
    outcome("planner-golden-numbers", fails, summary)
}

/// Convex region around `c`: intersection of small caps whose centers are
/// scattered near `c`.
fn random_polygon(rng: &mut SurveyRng, c: UnitVec, scale_deg: f64) -> Region {
    let k = 3 + rng.below(4) as usize;
    let hs = (0..k)
        .map(|_| {
            let center = advance(c, rng.range(0.0, 360.0), rng.range(0.0, 0.5 * scale_deg).to_radians());
            let radius = rng.range(0.6 * scale_deg, 1.2 * scale_deg).to_radians();
            Halfspace::new(center, radius.cos()).unwrap()
        })
        .collect();
    Region::polygon(hs).unwrap()
}

fn spatial_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut fails = Vec::new();
    let theta_arcsec = 60.0;
    let theta = (theta_arcsec / 3600.0f64).to_radians();
    let (mut regions, mut pairs_total) = (0, 0);
    for cat_i in 0..10u64 {
        let mut rng = SurveyRng::new(1000 + cat_i, 0);
        let n = 1000 + (cat_i as usize) * 1000;
        let center = rng.unit_vec();
        let patch_deg = 2.0;
        let mut entries: Vec<(u64, f64, f64)> = (0..n as u64)
            .map(|id| {
                let p = advance(center, rng.range(0.0, 360.0), (patch_deg * rng.uniform().sqrt()).to_radians());
                let (ra, dec) = p.to_radec();
                (id + 1, ra, dec)
            })
            .collect();
        // a few exact duplicates
        for j in 0..5 {
            let (_, ra, dec) = entries[j * 7];
            entries.push((n as u64 + 1 + j as u64, ra, dec));
        }
        let index = SpatialIndex::build(&entries, 1.0, DEFAULT_BUCKET).unwrap();
        let vecs: Vec<[f64; 3]> = entries.iter().map(|e| xyz(e.1, e.2)).collect();

        for q in 0..10 {
            let c = advance(center, rng.range(0.0, 360.0), rng.range(0.0, patch_deg).to_radians());
            let (cra, cdec) = c.to_radec();
            let region = if q % 2 == 0 {
                Region::cone_deg(cra, cdec, rng.range(0.05, 1.5)).unwrap()
            } else {
                let scale = rng.range(0.1, 1.0);
                random_polygon(&mut rng, c, scale)
            };
            let mut want: Vec<u64> = match &region {
                Region::Cone { radius, .. } => entries
                    .iter()
                    .filter(|e| haversine(cra, cdec, e.1, e.2) <= *radius)
                    .map(|e| e.0)
                    .collect(),
                Region::ConvexPolygon { halfspaces } => entries
                    .iter()
                    .zip(&vecs)
                    .filter(|(_, v)| halfspaces.iter().all(|h| dot(h.normal.as_array(), **v) >= h.offset))
                    .map(|(e, _)| e.0)
                    .collect(),
            };
            want.sort_unstable();
            let mut got = sphere::region_search(&index, &region).unwrap();
            got.sort_unstable();
            if got != want {
                fails.push(format!("catalog {cat_i} region {q}: {} ids vs oracle {}", got.len(), want.len()));
            }
            regions += 1;
        }

        let cat: Vec<(u64, UnitVec)> =
            entries.iter().map(|e| (e.0, UnitVec::from_radec(e.1, e.2).unwrap())).collect();
        let table = sphere::neighbors_join(&cat, theta_arcsec).unwrap();
        let got: Vec<(u64, u64)> = table.pairs.iter().map(|p| (p.id_a, p.id_b)).collect();
        let mut want = Vec::new();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let (a, b) = (&entries[i], &entries[j]);
                if haversine(a.1, a.2, b.1, b.2) <= theta {
                    want.push((a.0, b.0));
                    want.push((b.0, a.0));
                }
            }
        }
        want.sort_unstable();
        pairs_total += want.len();
        if got != want {
            fails.push(format!("catalog {cat_i} neighbors: {} pairs vs oracle {}", got.len(), want.len()));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs >= SPATIAL_MAX_SECONDS {
        fails.push(format!("took {secs:.1} s"));
    }
    outcome(
        "spatial-correctness",
        fails,
        format!("10 catalogs, {regions} regions, {pairs_total} ordered neighbor pairs, {secs:.2} s"),
    )
}

fn scan_engine() -> Outcome {
    let mut fails = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SurveyRng::new(77, 0);
    let records: Vec<Detection> = (0..1_000_000u64)
        .map(|i| {
            let (ra, dec) = rng.unit_vec().to_radec();
            Detection {
                det_id: i + 1,
                pass_id: (i % 50) as u32,
                mjd: 60_000.0 + (i % 50) as f64 * 7.0,
                ra,
                dec,
                flux: rng.range(0.0, 1000.0) as f32,
                flux_err: 1.0,
                zone: sphere::zone_of(dec, 1.0),
                ..Default::default()
            }
        })
        .collect();
    store::ingest_detections(records, 16, dir.path(), 1.0, "acceptance").unwrap();
    let s = Store::open(dir.path()).unwrap();
    let pred = Predicate::parse("flux>500 and dec>-30").unwrap();
    // warm the page cache
    store::scan(&s, &pred, None, 1).unwrap();

    let mut reference: Option<Vec<Detection>> = None;
    let mut rates = BTreeMap::new();
    for workers in [1, 2, 4, 8] {
        let out = store::scan(&s, &pred, None, workers).unwrap();
        rates.insert(workers, out.stats.rate);
        let mut got = out.records;
        got.sort_by_key(|d| d.det_id);
        match &reference {
            None => reference = Some(got),
            Some(r) if *r != got => fails.push(format!("{workers} workers returned a different set")),
            Some(_) => {}
        }
    }
    let measure = || {
        let r1 = store::scan(&s, &pred, None, 1).unwrap().stats.rate;
        let r4 = store::scan(&s, &pred, None, 4).unwrap().stats.rate;
        r4 / r1
    };
    let mut ratio = measure();
    if ratio < SCAN_MIN_SPEEDUP {
        ratio = measure();
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut waived = None;
    if ratio < SCAN_MIN_SPEEDUP {
        fails.push(format!("4-worker speed-up {ratio:.2} < {SCAN_MIN_SPEEDUP}"));
        if threads < 4 {
            waived = Some(format!("unattainable on {threads} hardware thread(s)"));
        }
    }
    let matched = reference.map_or(0, |r| r.len());
    let mut o = outcome(
        "scan-engine",
        fails,
        format!(
            "1e6 records, 16 partitions, {matched} matches identical for 1/2/4/8 workers, 1-worker {:.0} MB/s, speed-up {ratio:.2}, {threads} hardware thread(s)",
            rates[&1] / MB
        ),
    );
    o.waived = waived;
    o
}

fn master_catalog() -> Outcome {
    let cfg = SurveyConfig { n_objects: 1000, passes: 50, position_sigma_arcsec: 0.1, seed: 21, ..Default::default() };
    let survey = generate_survey(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store");
    store::ingest_detections(survey.detections.clone(), 8, &path, 1.0, "acceptance").unwrap();
    let mut s = Store::open(&path).unwrap();
    store::build_indexes(&mut s, 1.0).unwrap();
    let cat = store::build_master(&mut s, 1.0).unwrap();
    let mut fails = Vec::new();
    if cat.masters.len() != 1000 {
        fails.push(format!("{} masters", cat.masters.len()));
    }
    let short = cat.masters.iter().filter(|m| m.n_detections != 50).count();
    if short > 0 {
        fails.push(format!("{short} chains not of length 50"));
    }
    // every chain holds exactly one truth object
    let truth: HashMap<u64, u64> = survey.detections.iter().zip(&survey.truth_ids).map(|(d, t)| (d.det_id, *t)).collect();
    let mut per_master: HashMap<u64, HashSet<u64>> = HashMap::new();
    for (det, m) in &cat.links {
        per_master.entry(*m).or_default().insert(truth[det]);
    }
    let mixed = per_master.values().filter(|t| t.len() != 1).count();
    if mixed > 0 {
        fails.push(format!("{mixed} chains mix objects"));
    }
    let reduction = survey.detections.len() as f64 / cat.masters.len() as f64;
    outcome("master-catalog", fails, format!("{} masters, reduction factor {reduction:.1}", cat.masters.len()))
}

fn trigger_recall() -> Outcome {
    let cfg = SurveyConfig { n_objects: 1000, passes: 70, seed: 31, ..Default::default() };
    let survey = generate_survey(&cfg).unwrap();
    let (history, quiet): (Vec<Detection>, Vec<Detection>) = survey.detections.iter().partition(|d| d.pass_id < 20);
    assert_eq!(quiet.len(), 50_000);
    let cat = cross_match(&history, 1.0).unwrap();

    let mut rng = SurveyRng::new(31, 7);
    let mut stream = quiet;
    let mut injected = HashSet::new();
    let mut next_id = survey.detections.len() as u64 + 1;
    let mut push = |stream: &mut Vec<Detection>, pass: u32, p: UnitVec, flux: f64, err: f64| {
        let (ra, dec) = p.to_radec();
        stream.push(Detection {
            det_id: next_id,
            pass_id: pass,
            mjd: cfg.epoch_of(pass, ra),
            ra,
            dec,
            flux: flux as f32,
            flux_err: err as f32,
            zone: sphere::zone_of(dec, 1.0),
            ..Default::default()
        });
        injected.insert(next_id);
        next_id += 1;
    };
    let index: Vec<(u64, UnitVec)> = cat.masters.iter().map(|m| (m.master_id, m.position())).collect();
    for i in 0..100 {
        let pass = 20 + rng.below(50) as u32;
        if i % 2 == 0 {
            // brightening of a known object by 10 sigma
            let m = &cat.masters[rng.below(cat.masters.len() as u64) as usize];
            let err = m.mean_flux_err;
            let sigma = (err * err + m.flux_variance).sqrt();
            let p = advance(m.position(), rng.range(0.0, 360.0), (0.1f64 / 3600.0).to_radians());
            push(&mut stream, pass, p, m.mean_flux + 10.0 * sigma + err * rng.normal(), err);
        } else {
            // new source at 10 sigma, well away from every master
            let p = loop {
                let p = rng.unit_vec();
                if index.iter().all(|(_, q)| p.angle_to(*q) > (10.0f64 / 3600.0).to_radians()) {
                    break p;
                }
            };
            let err = 20.0;
            push(&mut stream, pass, p, 10.0 * err + err * rng.normal(), err);
        }
    }

    let t0 = Instant::now();
    timedomain::stream_order(&mut stream, 1.0);
    let alerts = timedomain::run_trigger(&stream, &cat.masters, TriggerConfig::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let tp = alerts.iter().filter(|a| injected.contains(&a.det_id)).count() as f64;
    let precision = if alerts.is_empty() { 0.0 } else { tp / alerts.len() as f64 };
    let recall = tp / injected.len() as f64;
    let mut fails = Vec::new();
    if precision < TRIGGER_MIN_PRECISION {
        fails.push(format!("precision {precision:.3}"));
    }
    if recall < TRIGGER_MIN_RECALL {
        fails.push(format!("recall {recall:.3}"));
    }
    if secs >= TRIGGER_MAX_SECONDS {
        fails.push(format!("took {secs:.2} s"));
    }
    outcome(
        "trigger",
        fails,
        format!(
            "{} stream detections, {} alerts, precision {precision:.3}, recall {recall:.3}, {secs:.3} s",
            stream.len(),
            alerts.len()
        ),
    )
}

fn light_curves() -> Outcome {
    let mut fails = Vec::new();
    let grid = FrequencyGrid::default();
    let true_period = 2.5;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = SurveyRng::new(500 + seed, 0);
        let mut t: Vec<f64> = (0..40).map(|_| 60_000.0 + rng.range(0.0, 100.0)).collect();
        t.sort_by(f64::total_cmp);
        let flux: Vec<f64> =
            t.iter().map(|&x| 1000.0 * (1.0 + 0.3 * (2.0 * PI * x / true_period + 1.0).sin()) + 10.0 * rng.normal()).collect();
        let lc = LightCurve::new(seed, t, flux, vec![10.0; 40]).unwrap();
        let fit = timedomain::fit_lightcurve(&lc, &grid).unwrap();
        let err = fit.best_period().map_or(f64::INFINITY, |p| rel(p, true_period));
        worst = worst.max(err);
        if err > PERIOD_TOL {
            fails.push(format!("seed {seed}: period {:?}", fit.best_period()));
        }
    }

    let cfg = SurveyConfig { n_objects: 1000, passes: 50, seed: 41, ..Default::default() };
    let survey = generate_survey(&cfg).unwrap();
    let mut cat = cross_match(&survey.detections, 1.0).unwrap();
    let dets = with_master_ids(&survey.detections, &cat);
    let fits = timedomain::classify_catalog(&dets, &mut cat, &grid).unwrap();
    let not_static = fits.iter().filter(|f| f.classification != store::Classification::Static).count();
    let rate = not_static as f64 / fits.len() as f64;
    if rate >= MAX_FALSE_VARIABLE_RATE {
        fails.push(format!("false-variable rate {rate:.3}"));
    }
    outcome(
        "light-curves",
        fails,
        format!("worst period error {:.3}% over 10 curves, false-variable rate {rate:.3} over {} objects", worst * 100.0, fits.len()),
    )
}

fn movers() -> Outcome {
    let mut fails = Vec::new();
    let cfg = SurveyConfig { n_objects: 2000, passes: 10, cadence_days: 1.0, mover_fraction: 0.1, seed: 51, ..Default::default() };
    let survey = generate_survey(&cfg).unwrap();
    let cat = cross_match(&survey.detections, 1.0).unwrap();
    let dets = with_master_ids(&survey.detections, &cat);
    let orphans = timedomain::orphans(&dets, &cat);
    let tracks = timedomain::link_movers(&orphans, MoverConfig::default()).unwrap();

    let mut truth_dets: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for (d, t) in survey.detections.iter().zip(&survey.truth_ids) {
        if survey.truth_of(*t).is_some_and(|o| o.kind == ObjectKind::Mover) {
            truth_dets.entry(*t).or_default().insert(d.det_id);
        }
    }
    truth_dets.retain(|_, s| s.len() >= 3);
    let track_sets: HashSet<BTreeSet<u64>> = tracks.iter().map(|t| t.det_ids.iter().copied().collect()).collect();
    let found = truth_dets.values().filter(|s| track_sets.contains(*s)).count();
    let recovery = found as f64 / truth_dets.len().max(1) as f64;
    if truth_dets.is_empty() || recovery < MOVER_MIN_RECOVERY {
        fails.push(format!("recovered {found}/{}", truth_dets.len()));
    }

    let still = SurveyConfig { n_objects: 1000, passes: 20, cadence_days: 1.0, seed: 52, ..Default::default() };
    let s2 = generate_survey(&still).unwrap();
    let cat2 = cross_match(&s2.detections, 1.0).unwrap();
    let dets2 = with_master_ids(&s2.detections, &cat2);
    let static_tracks = timedomain::link_movers(&timedomain::orphans(&dets2, &cat2), MoverConfig::default()).unwrap();
    if !static_tracks.is_empty() {
        fails.push(format!("{} tracks on an all-static catalog", static_tracks.len()));
    }
    outcome(
        "movers",
        fails,
        format!(
            "{found}/{} movers recovered ({:.1}%), {} tracks total, {} on static catalog",
            truth_dets.len(),
            recovery * 100.0,
            tracks.len(),
            static_tracks.len()
        ),
    )
}

fn correlation() -> Outcome {
    let mut fails = Vec::new();
    let bins = AngularBins::log_spaced(0.5, 10.0, 10).unwrap();

    let p2k = uniform_points(2000, 61);
    let naive = stats::pair_count(&p2k, &bins, PairCountMode::Naive).unwrap();
    let dual = stats::pair_count(&p2k, &bins, PairCountMode::DualTree).unwrap();
    if naive.counts != dual.counts {
        fails.push("dual-tree counts differ from naive at N=2000".into());
    }

    let n = 10_000usize;
    let p10k = uniform_points(n, 62);
    let h = stats::pair_count(&p10k, &bins, PairCountMode::DualTree).unwrap();
    let frac = h.distance_evaluations as f64 / (n * (n - 1) / 2) as f64;
    if frac >= DUAL_TREE_MAX_EVAL_FRACTION {
        fails.push(format!("evaluation fraction {frac:.3}"));
    }

    let same = stats::correlation_ls(&p2k, &p2k, &bins, PairCountMode::DualTree).unwrap();
    if same.bins.iter().any(|b| b.w.is_some_and(|w| w != 0.0)) {
        fails.push("data=randoms gives nonzero w".into());
    }

    let data = uniform_points(5000, 63);
    // the Poisson error bar assumes randoms far outnumber the data
    let randoms = uniform_points(50_000, 64);
    let null = stats::correlation_ls(&data, &randoms, &bins, PairCountMode::DualTree).unwrap();
    let mut worst: f64 = 0.0;
    for b in &null.bins {
        match (b.w, b.err) {
            (Some(w), Some(e)) => {
                worst = worst.max(w.abs() / e);
                if w.abs() > NULL_MAX_SIGMAS * e {
                    fails.push(format!("null bin {:.2}-{:.2} deg: w={w:.4} err={e:.4}", b.lo_deg, b.hi_deg));
                }
            }
            _ => fails.push(format!("null bin {:.2}-{:.2} deg undefined", b.lo_deg, b.hi_deg)),
        }
    }
    outcome(
        "correlation",
        fails,
        format!("N=10000 evaluation fraction {frac:.4}, worst null |w|/err {worst:.2}"),
    )
}

fn blobs(n_per: usize, centers: &[[f64; 2]], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SurveyRng::new(seed, 0);
    centers
        .iter()
        .flat_map(|c| (0..n_per).map(|_| vec![c[0] + rng.normal(), c[1] + 0.5 * rng.normal()]).collect::<Vec<_>>())
        .collect()
}

fn em() -> Outcome {
    let mut fails = Vec::new();
    let centers = [[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]];
    let mut worst_kd: f64 = 0.0;
    let mut evals = (0u64, 0u64);
    for seed in 1..=5u64 {
        let pts = blobs(700, &centers, 70 + seed);
        let cfg = EmConfig { k: 3, seed, ..Default::default() };
        let (exact, es) = stats::em_fit(&pts, &cfg).unwrap();
        let (kd, ks) = stats::em_fit(&pts, &EmConfig { mode: EmMode::Kd, ..cfg }).unwrap();
        for (label, m) in [("exact", &exact), ("kd", &kd)] {
            if m.log_likelihood.windows(2).any(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0)) {
                fails.push(format!("seed {seed} {label}: log-likelihood decreased"));
            }
        }
        let dev = stats::model_deviation(&kd, &exact).unwrap();
        worst_kd = worst_kd.max(dev);
        if dev > EM_KD_TOL {
            fails.push(format!("seed {seed}: kd deviation {dev:.2e}"));
        }
        if ks.evaluations >= es.evaluations {
            fails.push(format!("seed {seed}: kd used {} evaluations vs {}", ks.evaluations, es.evaluations));
        }
        evals.0 += es.evaluations;
        evals.1 += ks.evaluations;
    }

    // k = 1 against the sample mean and 1/N covariance
    let pts = blobs(500, &[[3.0, -2.0]], 99);
    let (m, _) = stats::em_fit(&pts, &EmConfig { k: 1, ..Default::default() }).unwrap();
    let n = pts.len() as f64;
    let mean = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
    let mut cov = [[0.0; 2]; 2];
    for p in &pts {
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]) / n;
            }
        }
    }
    let mut k1 = (m.weights[0] - 1.0).abs();
    for a in 0..2 {
        k1 = k1.max(rel(m.means[0][a], mean[a]));
        for b in 0..2 {
            k1 = k1.max((m.covariances[0][a][b] - cov[a][b]).abs() / cov[a][a].abs().max(1e-300));
        }
    }
    if k1 > EM_K1_TOL {
        fails.push(format!("k=1 deviation {k1:.2e}"));
    }
    outcome(
        "em",
        fails,
        format!(
            "5 seeds, worst kd deviation {worst_kd:.2e}, evaluations kd {} vs exact {}, k=1 deviation {k1:.1e}",
            evals.1, evals.0
        ),
    )
}

fn bench20() -> Outcome {
    let t0 = Instant::now();
    let mut sink = Vec::new();
    let rows = skyvault::cli::bench20(2024, None, skyvault::cli::TWENTY_QUERIES, 2000, 20, &mut sink).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let mut fails: Vec<String> =
        rows.iter().filter(|r| r.exit_code != 0).map(|r| format!("query {} exit {}", r.index, r.exit_code)).collect();
    if rows.len() != 20 {
        fails.push(format!("{} queries", rows.len()));
    }
    if secs >= BENCH_MAX_SECONDS {
        fails.push(format!("took {secs:.1} s"));
    }
    let query_secs: f64 = rows.iter().map(|r| r.seconds).sum();
    outcome("bench20", fails, format!("{} queries, {query_secs:.2} s in queries, {secs:.2} s including store build", rows.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("planner-golden-numbers", planner_golden),
        ("spatial-correctness", spatial_correctness),
        ("scan-engine", scan_engine),
        ("master-catalog", master_catalog),
        ("trigger", trigger_recall),
        ("light-curves", light_curves),
        ("movers", movers),
        ("correlation", correlation),
        ("em", em),
        ("bench20", bench20),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut blocking = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        match &o.waived {
            Some(why) if !o.pass => println!("{status} {}: {} [{why}]", o.name, o.detail),
            _ => println!("{status} {}: {}", o.name, o.detail),
        }
        if !o.pass && o.waived.is_none() {
            blocking += 1;
        }
    }
    if blocking > 0 {
        println!("{blocking} criteria failed");
        std::process::exit(1);
    }
}
