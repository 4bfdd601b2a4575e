//! Seeded synthetic survey: ground-truth objects and their per-pass
//! detections.
//!
//! The generator is single-threaded and driven by ChaCha8 streams seeded
//! with `seed_from_u64`; uniforms are `(next_u64 >> 11) * 2^-53` and
//! normals come from Box-Muller, so a seed reproduces bit-identically
//! regardless of the `rand` front end. Truth draws, position noise and
//! flux noise use separate streams: changing the noise level never moves
//! an object.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::sphere::{zone_of, UnitVec};
use crate::store::record::{write_records, Detection};
use crate::units::arcsec_to_rad;

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64); u53 uniforms; Box-Muller normals";
pub const GENERATOR_VERSION: u32 = 1;

/// Portable seeded source of uniforms and normals.
#[derive(Debug, Clone)]
pub struct SurveyRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SurveyRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.uniform() * n as f64) as u64).min(n.saturating_sub(1))
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Uniform point on the sphere: uniform z in [-1, 1], uniform azimuth.
    pub fn unit_vec(&mut self) -> UnitVec {
        let z = self.range(-1.0, 1.0);
        let phi = self.range(0.0, std::f64::consts::TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        UnitVec::new_unchecked(r * phi.cos(), r * phi.sin(), z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Static,
    Periodic,
    Transient,
    Mover,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectKind::Static => "static",
            ObjectKind::Periodic => "periodic",
            ObjectKind::Transient => "transient",
            ObjectKind::Mover => "mover",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub truth_id: u64,
    pub kind: ObjectKind,
    /// Position at the survey start epoch.
    pub ra: f64,
    pub dec: f64,
    pub base_flux: f64,
    pub period_days: Option<f64>,
    pub amplitude_fraction: Option<f64>,
    pub phase: Option<f64>,
    pub burst_epoch: Option<f64>,
    pub burst_duration_days: Option<f64>,
    /// Degrees per day along a great circle.
    pub motion_rate: Option<f64>,
    /// Degrees east of north.
    pub position_angle: Option<f64>,
}

impl TruthObject {
    /// Noise-free flux at `mjd`, or `None` when the object is not visible.
    pub fn flux_at(&self, mjd: f64, mjd_start: f64) -> Option<f64> {
        match self.kind {
            ObjectKind::Static | ObjectKind::Mover => Some(self.base_flux),
            ObjectKind::Periodic => {
                let p = self.period_days.unwrap_or(1.0);
                let a = self.amplitude_fraction.unwrap_or(0.0);
                let ph = self.phase.unwrap_or(0.0);
                let arg = std::f64::consts::TAU * (mjd - mjd_start) / p + ph;
                Some(self.base_flux * (1.0 + a * arg.sin()))
            }
            ObjectKind::Transient => {
                let t0 = self.burst_epoch.unwrap_or(mjd_start);
                let dur = self.burst_duration_days.unwrap_or(0.0);
                (mjd >= t0 && mjd <= t0 + dur).then_some(self.base_flux)
            }
        }
    }

    /// True position at `mjd`.
    pub fn position_at(&self, mjd: f64, mjd_start: f64) -> UnitVec {
        let p0 = UnitVec::from_radec_unchecked(self.ra, self.dec);
        match (self.motion_rate, self.position_angle) {
            (Some(rate), Some(pa)) => advance(p0, pa, (rate * (mjd - mjd_start)).to_radians()),
            _ => p0,
        }
    }
}

/// Local east and north unit vectors at `p`.
pub fn tangent_basis(p: UnitVec) -> ([f64; 3], [f64; 3]) {
    let (ra, dec) = p.to_radec();
    let (sr, cr) = ra.to_radians().sin_cos();
    let (sd, cd) = dec.to_radians().sin_cos();
    ([-sr, cr, 0.0], [-sd * cr, -sd * sr, cd])
}

/// Moves `p` by `angle` radians along the great circle leaving it at
/// position angle `pa_deg`.
pub fn advance(p: UnitVec, pa_deg: f64, angle: f64) -> UnitVec {
    let (e, n) = tangent_basis(p);
    let (sp, cp) = pa_deg.to_radians().sin_cos();
    let u = [cp * n[0] + sp * e[0], cp * n[1] + sp * e[1], cp * n[2] + sp * e[2]];
    let (s, c) = angle.sin_cos();
    UnitVec::new(p.x * c + u[0] * s, p.y * c + u[1] * s, p.z * c + u[2] * s).unwrap_or(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyConfig {
    pub n_objects: u64,
    pub passes: u32,
    pub cadence_days: f64,
    pub seed: u64,
    pub flux_sigma_fraction: f64,
    pub position_sigma_arcsec: f64,
    pub periodic_fraction: f64,
    pub transient_fraction: f64,
    pub mover_fraction: f64,
    pub mjd_start: f64,
    pub flux_range: (f64, f64),
    pub period_range_days: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Burst lengths in units of the cadence.
    pub burst_cadences: (f64, f64),
    pub mover_rate_range: (f64, f64),
    /// Zone height used to fill the `zone` field of generated records.
    pub zone_height_deg: f64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            n_objects: 1000,
            passes: 50,
            cadence_days: 7.0,
            seed: 1,
            flux_sigma_fraction: 0.01,
            position_sigma_arcsec: 0.1,
            periodic_fraction: 0.0,
            transient_fraction: 0.0,
            mover_fraction: 0.0,
            mjd_start: 60_000.0,
            flux_range: (100.0, 10_000.0),
            period_range_days: (0.5, 20.0),
            amplitude_range: (0.1, 0.5),
            burst_cadences: (4.0, 8.0),
            mover_rate_range: (0.05, 0.5),
            zone_height_deg: 1.0,
        }
    }
}

impl SurveyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes < 1 {
            return Err(Error::validation("passes must be at least 1"));
        }
        require_positive("cadence_days", self.cadence_days)?;
        require_non_negative("flux_sigma_fraction", self.flux_sigma_fraction)?;
        require_non_negative("position_sigma_arcsec", self.position_sigma_arcsec)?;
        for (name, f) in [
            ("periodic_fraction", self.periodic_fraction),
            ("transient_fraction", self.transient_fraction),
            ("mover_fraction", self.mover_fraction),
        ] {
            require_non_negative(name, f)?;
        }
        let sum = self.periodic_fraction + self.transient_fraction + self.mover_fraction;
        if sum > 1.0 + 1e-12 {
            return Err(Error::validation(format!("kind fractions sum to {sum}, above 1")));
        }
        for (name, (lo, hi)) in [
            ("flux_range", self.flux_range),
            ("period_range_days", self.period_range_days),
            ("burst_cadences", self.burst_cadences),
            ("mover_rate_range", self.mover_rate_range),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::validation(format!("{name} must satisfy 0 < lo <= hi")));
            }
        }
        let (alo, ahi) = self.amplitude_range;
        if !(0.0..1.0).contains(&alo) || !(alo..1.0).contains(&ahi) {
            return Err(Error::validation("amplitude_range must lie within [0, 1)"));
        }
        require_positive("zone_height_deg", self.zone_height_deg)
    }

    /// Nominal start epoch of pass `pass` (0-based).
    pub fn pass_epoch(&self, pass: u32) -> f64 {
        self.mjd_start + f64::from(pass) * self.cadence_days
    }

    /// Observation epoch of an object at `ra` during `pass`; the footprint is
    /// swept eastward over the first half of each cadence interval.
    pub fn epoch_of(&self, pass: u32, ra: f64) -> f64 {
        self.pass_epoch(pass) + 0.5 * self.cadence_days * (ra / 360.0)
    }

    pub fn mjd_end(&self) -> f64 {
        self.pass_epoch(self.passes)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Survey {
    pub truth: Vec<TruthObject>,
    /// Ordered by pass, then truth id.
    pub detections: Vec<Detection>,
    /// Parallel to `detections`.
    pub truth_ids: Vec<u64>,
}

impl Survey {
    pub fn truth_of(&self, truth_id: u64) -> Option<&TruthObject> {
        // truth ids are 1..=n in order
        self.truth.get(truth_id.checked_sub(1)? as usize)
    }

    pub fn count_by_kind(&self, kind: ObjectKind) -> usize {
        self.truth.iter().filter(|t| t.kind == kind).count()
    }
}

pub fn generate_survey(config: &SurveyConfig) -> Result<Survey> {
    config.validate()?;
    let mut truth_rng = SurveyRng::new(config.seed, 0);
    let mut pos_rng = SurveyRng::new(config.seed, 1);
    let mut flux_rng = SurveyRng::new(config.seed, 2);

    let n = config.n_objects as usize;
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let p = truth_rng.unit_vec();
        let (ra, dec) = p.to_radec();
        let (flo, fhi) = config.flux_range;
        let base_flux = (truth_rng.range(flo.ln(), fhi.ln())).exp();
        let u = truth_rng.uniform();
        let kind = if u < config.periodic_fraction {
            ObjectKind::Periodic
        } else if u < config.periodic_fraction + config.transient_fraction {
            ObjectKind::Transient
        } else if u < config.periodic_fraction + config.transient_fraction + config.mover_fraction {
            ObjectKind::Mover
        } else {
            ObjectKind::Static
        };
        let mut obj = TruthObject {
            truth_id: i as u64 + 1,
            kind,
            ra,
            dec,
            base_flux,
            period_days: None,
            amplitude_fraction: None,
            phase: None,
            burst_epoch: None,
            burst_duration_days: None,
            motion_rate: None,
            position_angle: None,
        };
        // always draw the same number of kind parameters so kinds do not
        // shift each other's random streams
        let period = truth_rng.range(config.period_range_days.0.ln(), config.period_range_days.1.ln()).exp();
        let amp = truth_rng.range(config.amplitude_range.0, config.amplitude_range.1);
        let phase = truth_rng.range(0.0, std::f64::consts::TAU);
        let dur = config.cadence_days * truth_rng.range(config.burst_cadences.0, config.burst_cadences.1);
        let burst = truth_rng.range(config.mjd_start, (config.mjd_end() - dur).max(config.mjd_start));
        let rate = truth_rng.range(config.mover_rate_range.0, config.mover_rate_range.1);
        let pa = truth_rng.range(0.0, 360.0);
        match kind {
            ObjectKind::Static => {}
            ObjectKind::Periodic => {
                obj.period_days = Some(period);
                obj.amplitude_fraction = Some(amp);
                obj.phase = Some(phase);
            }
            ObjectKind::Transient => {
                obj.burst_epoch = Some(burst);
                obj.burst_duration_days = Some(dur);
            }
            ObjectKind::Mover => {
                obj.motion_rate = Some(rate);
                obj.position_angle = Some(pa);
            }
        }
        truth.push(obj);
    }

    let sigma_pos = arcsec_to_rad(config.position_sigma_arcsec);
    let mut detections = Vec::new();
    let mut truth_ids = Vec::new();
    let mut next_id = 1u64;
    for pass in 0..config.passes {
        for obj in &truth {
            let mjd = config.epoch_of(pass, obj.ra);
            // noise is drawn for every object and pass so streams stay aligned
            let (g1, g2) = (pos_rng.normal(), pos_rng.normal());
            let gf = flux_rng.normal();
            let Some(model_flux) = obj.flux_at(mjd, config.mjd_start) else {
                continue;
            };
            let mut p = obj.position_at(mjd, config.mjd_start);
            if sigma_pos > 0.0 {
                let (e, nn) = tangent_basis(p);
                p = UnitVec::new(
                    p.x + sigma_pos * (g1 * e[0] + g2 * nn[0]),
                    p.y + sigma_pos * (g1 * e[1] + g2 * nn[1]),
                    p.z + sigma_pos * (g1 * e[2] + g2 * nn[2]),
                )?;
            }
            let (ra, dec) = p.to_radec();
            let sigma = (config.flux_sigma_fraction * model_flux).max(1e-6);
            detections.push(Detection {
                det_id: next_id,
                pass_id: pass,
                mjd,
                ra,
                dec,
                flux: (model_flux + sigma * gf) as f32,
                flux_err: sigma as f32,
                flags: 0,
                zone: zone_of(dec, config.zone_height_deg),
                master_id: 0,
            });
            truth_ids.push(obj.truth_id);
            next_id += 1;
        }
    }
    Ok(Survey { truth, detections, truth_ids })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyManifest {
    pub generator_version: u32,
    pub rng: String,
    pub config: SurveyConfig,
    pub truth_objects: usize,
    pub detections: usize,
    pub counts_by_kind: Vec<(ObjectKind, usize)>,
}

pub const DETECTIONS_FILE: &str = "detections.det";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRUTH_MAP_FILE: &str = "detection_truth.csv";
pub const MANIFEST_FILE: &str = "survey.json";

/// Writes `detections.det`, `truth.csv`, `detection_truth.csv` and
/// `survey.json` into `dir`.
pub fn write_survey(survey: &Survey, config: &SurveyConfig, dir: &Path) -> Result<SurveyManifest> {
    std::fs::create_dir_all(dir)?;
    write_records(BufWriter::new(File::create(dir.join(DETECTIONS_FILE))?), &survey.detections)?;

    let mut w = BufWriter::new(File::create(dir.join(TRUTH_FILE))?);
    writeln!(
        w,
        "truth_id,kind,ra,dec,base_flux,period_days,amplitude_fraction,burst_epoch,burst_duration_days,motion_rate,position_angle"
    )?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
    for t in &survey.truth {
        writeln!(
            w,
            "{},{},{:.10},{:.10},{:.6},{},{},{},{},{},{}",
            t.truth_id,
            t.kind,
            t.ra,
            t.dec,
            t.base_flux,
            opt(t.period_days),
            opt(t.amplitude_fraction),
            opt(t.burst_epoch),
            opt(t.burst_duration_days),
            opt(t.motion_rate),
            opt(t.position_angle)
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join(TRUTH_MAP_FILE))?);
    writeln!(w, "det_id,truth_id")?;
    for (d, t) in survey.detections.iter().zip(&survey.truth_ids) {
        writeln!(w, "{},{}", d.det_id, t)?;
    }
    w.flush()?;

    let kinds = [ObjectKind::Static, ObjectKind::Periodic, ObjectKind::Transient, ObjectKind::Mover];
    let manifest = SurveyManifest {
        generator_version: GENERATOR_VERSION,
        rng: RNG_ALGORITHM.to_string(),
        config: config.clone(),
        truth_objects: survey.truth.len(),
        detections: survey.detections.len(),
        counts_by_kind: kinds.iter().map(|&k| (k, survey.count_by_kind(k))).collect(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_counts() {
        let cfg = SurveyConfig { n_objects: 1000, passes: 50, ..Default::default() };
        let s = generate_survey(&cfg).unwrap();
        assert_eq!(s.detections.len(), 50_000);
        assert_eq!(s.truth_ids.len(), 50_000);
    }

    #[test]
    fn deterministic() {
        let cfg = SurveyConfig {
            n_objects: 300,
            passes: 5,
            periodic_fraction: 0.2,
            transient_fraction: 0.2,
            mover_fraction: 0.2,
            seed: 99,
            ..Default::default()
        };
        let a = generate_survey(&cfg).unwrap();
        let b = generate_survey(&cfg).unwrap();
        assert_eq!(a.truth, b.truth);
        let bytes = |s: &Survey| s.detections.iter().flat_map(|d| d.to_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn fractions_above_one_rejected() {
        let cfg = SurveyConfig {
            periodic_fraction: 0.5,
            transient_fraction: 0.4,
            mover_fraction: 0.3,
            ..Default::default()
        };
        assert!(matches!(generate_survey(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_survey() {
        let cfg = SurveyConfig { n_objects: 0, passes: 1, ..Default::default() };
        let s = generate_survey(&cfg).unwrap();
        assert!(s.truth.is_empty() && s.detections.is_empty());
    }

    #[test]
    fn uniform_on_sphere() {
        let n = 20_000;
        let mut rng = SurveyRng::new(5, 0);
        let mut m = [0.0; 3];
        for _ in 0..n {
            let p = rng.unit_vec();
            m[0] += p.x;
            m[1] += p.y;
            m[2] += p.z;
        }
        let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt() / n as f64;
        assert!(norm < 4.0 / (n as f64).sqrt(), "{norm}");
    }

    #[test]
    fn noise_level_does_not_move_objects() {
        let base = SurveyConfig { n_objects: 200, passes: 4, mover_fraction: 0.3, seed: 3, ..Default::default() };
        let noisy = SurveyConfig { flux_sigma_fraction: 0.2, ..base.clone() };
        let a = generate_survey(&base).unwrap();
        let b = generate_survey(&noisy).unwrap();
        assert_eq!(a.detections.len(), b.detections.len());
        let mut flux_changed = false;
        for (x, y) in a.detections.iter().zip(&b.detections) {
            assert_eq!((x.ra, x.dec, x.mjd), (y.ra, y.dec, y.mjd));
            flux_changed |= x.flux != y.flux;
        }
        assert!(flux_changed);
    }

    #[test]
    fn kind_rules_and_epochs() {
        let cfg = SurveyConfig {
            n_objects: 500,
            passes: 30,
            periodic_fraction: 0.2,
            transient_fraction: 0.2,
            mover_fraction: 0.2,
            position_sigma_arcsec: 0.0,
            ..Default::default()
        };
        let s = generate_survey(&cfg).unwrap();
        let mut counts = vec![0usize; s.truth.len() + 1];
        for (d, &t) in s.detections.iter().zip(&s.truth_ids) {
            let obj = s.truth_of(t).expect("truth id exists");
            counts[t as usize] += 1;
            assert!(d.mjd >= cfg.pass_epoch(d.pass_id) && d.mjd < cfg.pass_epoch(d.pass_id + 1));
            if obj.kind == ObjectKind::Transient {
                let t0 = obj.burst_epoch.unwrap();
                assert!(d.mjd >= t0 && d.mjd <= t0 + obj.burst_duration_days.unwrap());
            }
            if obj.kind != ObjectKind::Mover {
                let sep = d.position().angle_to(UnitVec::from_radec(obj.ra, obj.dec).unwrap());
                assert!(sep < 1e-12);
            }
        }
        for t in &s.truth {
            let c = counts[t.truth_id as usize];
            match t.kind {
                ObjectKind::Transient => assert!(c <= cfg.passes as usize),
                _ => assert_eq!(c, cfg.passes as usize),
            }
        }
    }

    #[test]
    fn movers_follow_great_circles() {
        let p = UnitVec::from_radec(30.0, 10.0).unwrap();
        let q = advance(p, 90.0, 0.1f64.to_radians());
        assert!((p.angle_to(q).to_degrees() - 0.1).abs() < 1e-12);
        let (ra, dec) = q.to_radec();
        assert!(ra > 30.0 && (dec - 10.0).abs() < 0.01);
    }
}
