//! Streaming transient trigger: every incoming detection is matched against
//! the master catalog as it arrives, in `(mjd, zone)` order.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{zone_of, KdTree, DEFAULT_BUCKET};
use crate::store::{Detection, MasterObject, DEFAULT_ZONE_HEIGHT};
use crate::units::arcsec_to_rad;

pub const ALERT_CSV_HEADER: &str = "kind,mjd,ra,dec,flux,deviation_sigmas,nearest_master_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertKind {
    NewSource,
    FluxAnomaly,
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlertKind::NewSource => "new-source",
            AlertKind::FluxAnomaly => "flux-anomaly",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub kind: AlertKind,
    pub det_id: u64,
    pub mjd: f64,
    pub ra: f64,
    pub dec: f64,
    pub flux: f64,
    /// For a new source this is the detection's own signal-to-noise.
    pub deviation_sigmas: f64,
    pub nearest_master_id: Option<u64>,
}

impl Alert {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kind,
            self.mjd,
            self.ra,
            self.dec,
            self.flux,
            self.deviation_sigmas,
            self.nearest_master_id.map(|m| m.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub match_radius_arcsec: f64,
    pub k_sigma: f64,
    pub zone_height_deg: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self { match_radius_arcsec: 1.0, k_sigma: 5.0, zone_height_deg: DEFAULT_ZONE_HEIGHT }
    }
}

/// Sequential consumer holding the spatially indexed master catalog.
pub struct Trigger<'a> {
    masters: Vec<&'a MasterObject>,
    tree: KdTree,
    radius: f64,
    k_sigma: f64,
    zone_height: f64,
    last_key: Option<(f64, u32)>,
    seen: u64,
}

impl<'a> Trigger<'a> {
    pub fn new(masters: &'a [MasterObject], config: TriggerConfig) -> Result<Self> {
        crate::error::require_positive("match_radius_arcsec", config.match_radius_arcsec)?;
        crate::error::require_positive("k_sigma", config.k_sigma)?;
        crate::error::require_positive("zone_height_deg", config.zone_height_deg)?;
        let tree = KdTree::build(masters.iter().enumerate().map(|(i, m)| (i as u64, m.position())), DEFAULT_BUCKET);
        Ok(Self {
            masters: masters.iter().collect(),
            tree,
            radius: arcsec_to_rad(config.match_radius_arcsec),
            k_sigma: config.k_sigma,
            zone_height: config.zone_height_deg,
            last_key: None,
            seen: 0,
        })
    }

    /// Processes one detection; `Ok(None)` means it passed silently.
    pub fn process(&mut self, d: &Detection) -> Result<Option<Alert>> {
        let ordinal = self.seen;
        self.seen += 1;
        d.validate().map_err(|reason| Error::MalformedRecord { ordinal, reason })?;
        let key = (d.mjd, zone_of(d.dec, self.zone_height));
        if let Some(prev) = self.last_key {
            if key.0 < prev.0 || (key.0 == prev.0 && key.1 < prev.1) {
                return Err(Error::validation(format!(
                    "stream out of (mjd, zone) order at detection {ordinal} (det_id {})",
                    d.det_id
                )));
            }
        }
        self.last_key = Some(key);

        let flux = f64::from(d.flux);
        let err = f64::from(d.flux_err);
        let base = Alert {
            kind: AlertKind::NewSource,
            det_id: d.det_id,
            mjd: d.mjd,
            ra: d.ra,
            dec: d.dec,
            flux,
            deviation_sigmas: flux / err,
            nearest_master_id: None,
        };
        let Some((idx, _)) = self.tree.nearest_within(d.position(), self.radius, 0.0) else {
            return Ok(Some(base));
        };
        let m = self.masters[idx as usize];
        let scatter2 = if m.n_detections > 1 { m.flux_variance } else { m.mean_flux_err * m.mean_flux_err };
        let deviation = (flux - m.mean_flux).abs() / (err * err + scatter2).sqrt();
        Ok((deviation > self.k_sigma).then_some(Alert {
            kind: AlertKind::FluxAnomaly,
            deviation_sigmas: deviation,
            nearest_master_id: Some(m.master_id),
            ..base
        }))
    }
}

/// Runs the trigger over a whole stream, returning alerts in input order.
pub fn run_trigger(stream: &[Detection], masters: &[MasterObject], config: TriggerConfig) -> Result<Vec<Alert>> {
    let mut trigger = Trigger::new(masters, config)?;
    let mut out = Vec::new();
    for d in stream {
        if let Some(a) = trigger.process(d)? {
            out.push(a);
        }
    }
    Ok(out)
}

/// Sorts detections into the trigger's `(mjd, zone, det_id)` stream order.
pub fn stream_order(detections: &mut [Detection], zone_height_deg: f64) {
    detections.sort_by(|a, b| {
        a.mjd
            .total_cmp(&b.mjd)
            .then(zone_of(a.dec, zone_height_deg).cmp(&zone_of(b.dec, zone_height_deg)))
            .then(a.det_id.cmp(&b.det_id))
    });
}

/// Streams alerts as CSV, flushing after every `batch` detections.
pub fn run_trigger_csv<W: Write>(
    stream: &[Detection],
    masters: &[MasterObject],
    config: TriggerConfig,
    batch: usize,
    mut out: W,
) -> Result<usize> {
    let mut trigger = Trigger::new(masters, config)?;
    writeln!(out, "{ALERT_CSV_HEADER}")?;
    let mut n = 0;
    for chunk in stream.chunks(batch.max(1)) {
        for d in chunk {
            if let Some(a) = trigger.process(d)? {
                writeln!(out, "{}", a.csv_line())?;
                n += 1;
            }
        }
        out.flush()?;
    }
    Ok(n)
}
