//! Capacity planner: acquisition, pipeline, storage, scan, transfer, load
//! and hardware-timeline arithmetic for a petabyte-per-year survey.
//!
//! Every function here is pure. Byte quantities are decimal (1 TB = 1e12 B).
//! The `Default` impls of the spec structs carry the reference scenario
//! (10 Tpix sky, 2 B/pixel, 50 passes per year, ...), so
//! `plan_scan(&ScanSpec::default())` answers the canonical question directly.

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::units::{GB, MB, SECONDS_PER_DAY, SECONDS_PER_HOUR, TB};

/// Moore's-law doubling period used throughout the reference scenario.
pub const DEFAULT_MOORE_DOUBLING_YEARS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSpec {
    pub sky_pixels: f64,
    pub bytes_per_pixel: f64,
    pub passes_per_year: f64,
    pub camera_gigapixels: f64,
    pub exposure_seconds: f64,
    pub night_hours: f64,
    pub nights_per_year: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            sky_pixels: 10e12,
            bytes_per_pixel: 2.0,
            passes_per_year: 50.0,
            camera_gigapixels: 5.0,
            exposure_seconds: 60.0,
            night_hours: 8.0,
            nights_per_year: 200.0,
        }
    }
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("sky_pixels", self.sky_pixels)?;
        require_positive("bytes_per_pixel", self.bytes_per_pixel)?;
        require_positive("passes_per_year", self.passes_per_year)?;
        require_positive("camera_gigapixels", self.camera_gigapixels)?;
        require_positive("exposure_seconds", self.exposure_seconds)?;
        require_positive("night_hours", self.night_hours)?;
        require_positive("nights_per_year", self.nights_per_year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionPlan {
    pub bytes_per_pass: f64,
    pub bytes_per_year: f64,
    pub bytes_per_night: f64,
    /// Bytes per second while observing.
    pub stream_rate: f64,
    /// Imaging volume written over all observing nights in a year.
    pub bytes_per_observing_year: f64,
}

pub fn plan_acquisition(spec: &AcquisitionSpec) -> Result<AcquisitionPlan> {
    spec.validate()?;
    let bytes_per_pass = spec.sky_pixels * spec.bytes_per_pixel;
    let night_seconds = spec.night_hours * SECONDS_PER_HOUR;
    let exposures = night_seconds / spec.exposure_seconds;
    let bytes_per_night = exposures * spec.camera_gigapixels * 1e9 * spec.bytes_per_pixel;
    Ok(AcquisitionPlan {
        bytes_per_pass,
        bytes_per_year: bytes_per_pass * spec.passes_per_year,
        bytes_per_night,
        stream_rate: bytes_per_night / night_seconds,
        bytes_per_observing_year: bytes_per_night * spec.nights_per_year,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSpec {
    pub stream_rate: f64,
    pub per_cpu_rate: f64,
    pub years_ahead: f64,
    pub moore_doubling_period: f64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            stream_rate: 170.0 * MB,
            per_cpu_rate: 0.6 * MB,
            years_ahead: 0.0,
            moore_doubling_period: DEFAULT_MOORE_DOUBLING_YEARS,
        }
    }
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("stream_rate", self.stream_rate)?;
        require_positive("per_cpu_rate", self.per_cpu_rate)?;
        require_non_negative("years_ahead", self.years_ahead)?;
        require_positive("moore_doubling_period", self.moore_doubling_period)
    }
}

/// Moore's-law speed multiplier after `years` with the given doubling period.
pub fn moore_factor(years: f64, doubling_period: f64) -> f64 {
    (years / doubling_period).exp2()
}

/// Processors needed to keep up with the incoming stream in real time.
pub fn plan_pipeline(spec: &PipelineSpec) -> Result<u64> {
    spec.validate()?;
    let per_cpu = spec.per_cpu_rate * moore_factor(spec.years_ahead, spec.moore_doubling_period);
    Ok((spec.stream_rate / per_cpu).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageSpec {
    pub objects_per_pass: f64,
    pub passes: f64,
    pub bytes_per_object: f64,
    pub index_overhead_fraction: f64,
    pub master_reduction_factor: f64,
    /// Sky area of the coadd in pixels.
    pub sky_pixels: f64,
    /// Image plus noise bytes per coadd pixel.
    pub coadd_bytes_per_pixel: f64,
    /// Fraction of the sky whose pixels are kept for every pass.
    pub variable_pixel_fraction: f64,
}

impl Default for StorageSpec {
    fn default() -> Self {
        Self {
            objects_per_pass: 2e9,
            passes: 50.0,
            bytes_per_object: 1_000.0,
            index_overhead_fraction: 0.2,
            master_reduction_factor: 30.0,
            sky_pixels: 10e12,
            coadd_bytes_per_pixel: 3.0,
            variable_pixel_fraction: 0.01,
        }
    }
}

impl StorageSpec {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("objects_per_pass", self.objects_per_pass)?;
        require_positive("passes", self.passes)?;
        require_positive("bytes_per_object", self.bytes_per_object)?;
        require_non_negative("index_overhead_fraction", self.index_overhead_fraction)?;
        if !(self.master_reduction_factor > 1.0) || !self.master_reduction_factor.is_finite() {
            return Err(Error::validation(format!(
                "master_reduction_factor must be > 1 (got {})",
                self.master_reduction_factor
            )));
        }
        require_non_negative("sky_pixels", self.sky_pixels)?;
        require_positive("coadd_bytes_per_pixel", self.coadd_bytes_per_pixel)?;
        require_non_negative("variable_pixel_fraction", self.variable_pixel_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoragePlan {
    pub catalog_bytes: f64,
    pub indexed_bytes: f64,
    pub master_bytes: f64,
    pub coadd_bytes: f64,
}

pub fn plan_storage(spec: &StorageSpec) -> Result<StoragePlan> {
    spec.validate()?;
    let catalog_bytes = spec.objects_per_pass * spec.passes * spec.bytes_per_object;
    let coadd_base = spec.sky_pixels * spec.coadd_bytes_per_pixel;
    Ok(StoragePlan {
        catalog_bytes,
        indexed_bytes: catalog_bytes * (1.0 + spec.index_overhead_fraction),
        master_bytes: catalog_bytes / spec.master_reduction_factor,
        coadd_bytes: coadd_base * (1.0 + spec.variable_pixel_fraction * spec.passes),
    })
}

/// Disk purchase cost after `years_ahead` when the price per TB halves every
/// `halving_years`. Reported only; nothing optimizes against it.
pub fn storage_cost(bytes: f64, dollars_per_tb: f64, years_ahead: f64, halving_years: f64) -> Result<f64> {
    require_non_negative("bytes", bytes)?;
    require_non_negative("dollars_per_tb", dollars_per_tb)?;
    require_non_negative("years_ahead", years_ahead)?;
    require_positive("halving_years", halving_years)?;
    Ok(bytes / TB * dollars_per_tb / moore_factor(years_ahead, halving_years))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSpec {
    pub db_bytes: f64,
    pub disk_count: u64,
    pub per_disk_rate: f64,
    pub per_server_disk_capacity: u64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            db_bytes: 120.0 * TB,
            disk_count: 30,
            per_disk_rate: 150.0 * MB,
            per_server_disk_capacity: 30,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("db_bytes", self.db_bytes)?;
        if self.disk_count < 1 {
            return Err(Error::validation("disk_count must be at least 1"));
        }
        require_positive("per_disk_rate", self.per_disk_rate)?;
        if self.per_server_disk_capacity < 1 {
            return Err(Error::validation("per_server_disk_capacity must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEstimate {
    pub aggregate_rate: f64,
    pub scan_seconds: f64,
    pub servers_needed: u64,
}

pub fn plan_scan(spec: &ScanSpec) -> Result<ScanEstimate> {
    spec.validate()?;
    let aggregate_rate = spec.disk_count as f64 * spec.per_disk_rate;
    Ok(ScanEstimate {
        aggregate_rate,
        scan_seconds: spec.db_bytes / aggregate_rate,
        servers_needed: spec.disk_count.div_ceil(spec.per_server_disk_capacity),
    })
}

/// Largest disk size (bytes) that still meets a target scan time, and the
/// disk count it implies.
pub fn disks_for_scan_time(db_bytes: f64, per_disk_rate: f64, target_seconds: f64) -> Result<(u64, f64)> {
    require_non_negative("db_bytes", db_bytes)?;
    require_positive("per_disk_rate", per_disk_rate)?;
    require_positive("target_seconds", target_seconds)?;
    let disks = (db_bytes / (per_disk_rate * target_seconds)).ceil().max(1.0) as u64;
    Ok((disks, db_bytes / disks as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSpec {
    pub total_bytes: f64,
    /// Raw link rate in bits per second.
    pub link_rate: f64,
    pub link_utilization: f64,
    /// Line bits consumed per payload byte (framing and protocol overhead).
    pub wire_bits_per_byte: f64,
    pub brick_capacity: f64,
    pub brick_shipping_days: f64,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            total_bytes: 165.0 * TB,
            link_rate: 155e6,
            link_utilization: 0.65,
            wire_bits_per_byte: 10.0,
            brick_capacity: 32.0 * TB,
            brick_shipping_days: 2.0,
        }
    }
}

impl TransferSpec {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("total_bytes", self.total_bytes)?;
        require_positive("link_rate", self.link_rate)?;
        if !(self.link_utilization > 0.0 && self.link_utilization <= 1.0) {
            return Err(Error::validation(format!(
                "link_utilization must be in (0, 1] (got {})",
                self.link_utilization
            )));
        }
        if !(self.wire_bits_per_byte >= 8.0) {
            return Err(Error::validation(format!(
                "wire_bits_per_byte must be at least 8 (got {})",
                self.wire_bits_per_byte
            )));
        }
        require_positive("brick_capacity", self.brick_capacity)?;
        require_non_negative("brick_shipping_days", self.brick_shipping_days)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub network_days: f64,
    /// Payload bytes per second over the link.
    pub effective_net_rate: f64,
    pub brick_count: u64,
    pub sneakernet_days: f64,
}

pub fn plan_transfer(spec: &TransferSpec) -> Result<TransferPlan> {
    spec.validate()?;
    let effective_net_rate = spec.link_rate * spec.link_utilization / spec.wire_bits_per_byte;
    let brick_count = (spec.total_bytes / spec.brick_capacity).ceil() as u64;
    Ok(TransferPlan {
        network_days: spec.total_bytes / effective_net_rate / SECONDS_PER_DAY,
        effective_net_rate,
        brick_count,
        sneakernet_days: if brick_count == 0 { 0.0 } else { spec.brick_shipping_days },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineSpec {
    pub year: u32,
    pub moore_doubling_years: f64,
    pub capacity_doubling_years: f64,
    /// Disk streaming speed grows as capacity^exponent.
    pub disk_rate_growth_exponent: f64,
}

impl Default for TimelineSpec {
    fn default() -> Self {
        Self {
            year: 1,
            moore_doubling_years: DEFAULT_MOORE_DOUBLING_YEARS,
            capacity_doubling_years: DEFAULT_MOORE_DOUBLING_YEARS,
            disk_rate_growth_exponent: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineReport {
    pub year: u32,
    pub cpu_speed_factor: f64,
    pub pipeline_cpu_factor: f64,
    pub analysis_cpu_factor: f64,
    pub disk_capacity_factor: f64,
    pub disk_speed_factor: f64,
    pub disk_count_factor: f64,
    pub stored_bytes_factor: f64,
}

/// Hardware needs in survey year `year` relative to year 1, for a survey
/// whose data rate stays constant while the archive grows linearly.
pub fn plan_hardware_timeline(spec: &TimelineSpec) -> Result<TimelineReport> {
    if spec.year < 1 {
        return Err(Error::validation("year must be at least 1"));
    }
    require_positive("moore_doubling_years", spec.moore_doubling_years)?;
    require_positive("capacity_doubling_years", spec.capacity_doubling_years)?;
    require_non_negative("disk_rate_growth_exponent", spec.disk_rate_growth_exponent)?;
    let elapsed = f64::from(spec.year - 1);
    let stored = f64::from(spec.year);
    let cpu_speed = moore_factor(elapsed, spec.moore_doubling_years);
    let capacity = moore_factor(elapsed, spec.capacity_doubling_years);
    let disk_speed = capacity.powf(spec.disk_rate_growth_exponent);
    Ok(TimelineReport {
        year: spec.year,
        cpu_speed_factor: cpu_speed,
        pipeline_cpu_factor: 1.0 / cpu_speed,
        analysis_cpu_factor: stored / cpu_speed,
        disk_capacity_factor: capacity,
        disk_speed_factor: disk_speed,
        disk_count_factor: stored / disk_speed,
        stored_bytes_factor: stored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadPlan {
    pub rate_total: f64,
    pub rate_per_brick: f64,
}

/// Sustained load rate needed to (re)load `indexed_bytes` within `window_days`.
pub fn plan_load(indexed_bytes: f64, window_days: f64, bricks: u64) -> Result<LoadPlan> {
    require_non_negative("indexed_bytes", indexed_bytes)?;
    require_positive("window_days", window_days)?;
    if bricks < 1 {
        return Err(Error::validation("bricks must be at least 1"));
    }
    let rate_total = indexed_bytes / (window_days * SECONDS_PER_DAY);
    Ok(LoadPlan {
        rate_total,
        rate_per_brick: rate_total / bricks as f64,
    })
}

/// Peak database load rate when the catalog is `catalog_fraction` of the
/// imaging stream.
pub fn peak_load_rate(stream_rate: f64, catalog_fraction: f64) -> Result<f64> {
    require_non_negative("stream_rate", stream_rate)?;
    require_non_negative("catalog_fraction", catalog_fraction)?;
    Ok(stream_rate * catalog_fraction)
}

/// All planner inputs in one document; the shape accepted by `--scenario`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub acquisition: AcquisitionSpec,
    pub pipeline: PipelineSpec,
    pub storage: StorageSpec,
    pub scan: ScanSpec,
    pub transfer: TransferSpec,
    pub timeline: TimelineSpec,
    pub load: LoadSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadSpec {
    pub indexed_bytes: f64,
    pub window_days: f64,
    pub bricks: u64,
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            indexed_bytes: 120.0 * TB,
            window_days: 14.0,
            bricks: 8,
        }
    }
}

/// One line of the reference-scenario report: a computed quantity next to
/// the rounded figure quoted for it in the survey design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub quantity: &'static str,
    pub unit: &'static str,
    pub computed: f64,
    pub quoted: f64,
}

impl ReportRow {
    pub fn relative_error(&self) -> f64 {
        (self.computed - self.quoted).abs() / self.quoted.abs()
    }
}

/// Runs every planner operation on the reference scenario.
pub fn reference_report() -> Result<Vec<ReportRow>> {
    let row = |quantity, unit, computed, quoted| ReportRow { quantity, unit, computed, quoted };
    let acq = plan_acquisition(&AcquisitionSpec::default())?;
    let cpus_now = plan_pipeline(&PipelineSpec::default())?;
    let cpus_later = plan_pipeline(&PipelineSpec { years_ahead: 6.0, ..Default::default() })?;
    let storage = plan_storage(&StorageSpec::default())?;
    let scan30 = plan_scan(&ScanSpec::default())?;
    let scan240 = plan_scan(&ScanSpec { disk_count: 240, ..Default::default() })?;
    let master_scan = plan_scan(&ScanSpec { db_bytes: 4.0 * TB, disk_count: 500, ..Default::default() })?;
    let net = plan_transfer(&TransferSpec::default())?;
    let boxes = plan_transfer(&TransferSpec { total_bytes: 160.0 * TB, ..Default::default() })?;
    let reload = plan_load(120.0 * TB, 14.0, 8)?;
    let peak = peak_load_rate(170.0 * MB, 0.12)?;
    let year4 = plan_hardware_timeline(&TimelineSpec { year: 4, ..Default::default() })?;
    let cost_now = storage_cost(1e15, 2_000.0, 0.0, 1.0)?;
    let cost_later = storage_cost(1e15, 2_000.0, 6.0, 1.0)?;

    Ok(vec![
        row("raw imaging per pass", "TB", acq.bytes_per_pass / TB, 20.0),
        row("raw imaging per year", "TB", acq.bytes_per_year / TB, 1_000.0),
        row("raw imaging per night", "TB", acq.bytes_per_night / TB, 5.0),
        row("incoming stream rate", "MB/s", acq.stream_rate / MB, 170.0),
        row("pipeline CPUs today", "cpus", cpus_now as f64, 300.0),
        row("pipeline CPUs in 6 years", "cpus", cpus_later as f64, 20.0),
        row("object catalog", "TB", storage.catalog_bytes / TB, 100.0),
        row("catalog with indices", "TB", storage.indexed_bytes / TB, 120.0),
        row("master catalog", "TB", storage.master_bytes / TB, 4.0),
        row("coadd with variable pixels", "TB", storage.coadd_bytes / TB, 45.0),
        row("scan on 30 disks", "h", scan30.scan_seconds / SECONDS_PER_HOUR, 7.4),
        row("scan on 240 disks", "h", scan240.scan_seconds / SECONDS_PER_HOUR, 1.0),
        row("servers for 240 disks", "servers", scan240.servers_needed as f64, 8.0),
        row("aggregate rate of 500 disks", "GB/s", master_scan.aggregate_rate / GB, 75.0),
        row("master scan at 500 disks", "s", master_scan.scan_seconds, 53.0),
        row("OC-3 effective rate", "MB/s", net.effective_net_rate / MB, 10.0),
        row("OC-3 replication", "days", net.network_days, 200.0),
        row("transfer bricks for 160 TB", "boxes", boxes.brick_count as f64, 5.0),
        row("reload rate over two weeks", "MB/s", reload.rate_total / MB, 125.0),
        row("reload rate per brick", "MB/s", reload.rate_per_brick / MB, 15.0),
        row("peak load rate", "MB/s", peak / MB, 20.0),
        row("year-4 pipeline CPUs", "x", year4.pipeline_cpu_factor, 0.25),
        row("year-4 analysis CPUs", "x", year4.analysis_cpu_factor, 1.0),
        row("year-4 disks", "x", year4.disk_count_factor, 2.0),
        row("1 PB of disk today", "$K", cost_now / 1e3, 2_000.0),
        row("1 PB of disk in 6 years", "$K", cost_later / 1e3, 32.0),
    ])
}
