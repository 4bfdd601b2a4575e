//! The `skyvault` command line: one subcommand per capability.
//!
//! Machine-readable output goes to `out` (CSV by default), diagnostics to
//! `err`. Exit codes: 0 success, 2 validation or usage error, 3 I/O or
//! corrupt data.

mod bench;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::planner::{self, Scenario};
use crate::skygen::{self, SurveyConfig};
use crate::sphere::{self, Region, UnitVec};
use crate::stats::{self, AngularBins, EmConfig, EmMode, PairCountMode};
use crate::store::{self, master::save_masters, Predicate, Store};
use crate::timedomain::{self, FrequencyGrid, MoverConfig, TriggerConfig};
use crate::units;

pub use bench::{bench20, BenchRow, TWENTY_QUERIES};
pub use output::{Format, Table};

#[derive(Debug, Parser)]
#[command(name = "skyvault", version, about = "Time-domain sky-survey catalog engine, mining algorithms and capacity planner")]
pub struct Cli {
    /// Output format for results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity planning: data volumes, CPUs, scan times, transfer and load rates.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Generate a seeded synthetic survey with truth labels.
    Gen(GenArgs),
    /// Ingest a detection file into a partitioned store.
    Ingest(IngestArgs),
    /// Build the declination-zone index of a store.
    Index(IndexArgs),
    /// Cross-match detections into the master object catalog.
    Master(MasterArgs),
    /// Parallel scan with predicate, cone or polygon filters.
    Query(QueryArgs),
    /// Neighbor pairs within an angle, or the angle between two positions.
    Neighbors(NeighborsArgs),
    /// Fit constant and periodic light-curve models per master.
    Lc(LcArgs),
    /// Classify every master from its chain and light curve.
    Classify(ClassifyArgs),
    /// Stream detections against the master catalog and emit alerts.
    Trigger(TriggerArgs),
    /// Link unmatched detections into moving-object tracks.
    Movers(MoversArgs),
    /// Landy-Szalay two-point angular correlation function.
    Corr(CorrArgs),
    /// Gaussian-mixture EM fit and outlier scores.
    Em(EmArgs),
    /// Run the twenty-query benchmark against a seeded reference store.
    Bench20(Bench20Args),
}

fn bytes(s: &str) -> std::result::Result<f64, String> {
    units::parse_bytes(s).map_err(|e| e.to_string())
}

fn byte_rate(s: &str) -> std::result::Result<f64, String> {
    units::parse_byte_rate(s).map_err(|e| e.to_string())
}

fn bit_rate(s: &str) -> std::result::Result<f64, String> {
    units::parse_bit_rate(s).map_err(|e| e.to_string())
}

fn arcsec(s: &str) -> std::result::Result<f64, String> {
    units::parse_angle_arcsec(s).map_err(|e| e.to_string())
}

fn degrees(s: &str) -> std::result::Result<f64, String> {
    units::parse_angle_deg(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// JSON scenario file supplying defaults; flags override it.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Raw imaging volume per pass, night and year, and the stream rate.
    Acquisition {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        sky_pixels: Option<f64>,
        #[arg(long)]
        bytes_per_pixel: Option<f64>,
        #[arg(long)]
        passes_per_year: Option<f64>,
        #[arg(long)]
        camera_gigapixels: Option<f64>,
        /// Seconds per exposure.
        #[arg(long)]
        exposure: Option<f64>,
        #[arg(long)]
        night_hours: Option<f64>,
    },
    /// Pipeline CPUs needed to keep up with the stream.
    Pipeline {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_parser = byte_rate)]
        stream_rate: Option<f64>,
        #[arg(long, value_parser = byte_rate)]
        cpu_rate: Option<f64>,
        #[arg(long)]
        years_ahead: Option<f64>,
        /// Moore's-law doubling period in years.
        #[arg(long)]
        moore: Option<f64>,
    },
    /// Catalog, index, master and coadd sizes.
    Storage {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        objects_per_pass: Option<f64>,
        #[arg(long)]
        passes: Option<f64>,
        #[arg(long, value_parser = bytes)]
        bytes_per_object: Option<f64>,
        #[arg(long)]
        index_overhead: Option<f64>,
        #[arg(long)]
        master_reduction: Option<f64>,
        #[arg(long)]
        variable_fraction: Option<f64>,
    },
    /// Sequential scan time over a disk farm.
    Scan {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_parser = bytes)]
        db: Option<f64>,
        #[arg(long)]
        disks: Option<u64>,
        #[arg(long, value_parser = byte_rate)]
        disk_rate: Option<f64>,
        #[arg(long)]
        disks_per_server: Option<u64>,
        /// Also report the disks needed to finish within this many hours.
        #[arg(long)]
        target_hours: Option<f64>,
    },
    /// Network replication time versus shipping disk bricks.
    Transfer {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_parser = bytes)]
        total: Option<f64>,
        #[arg(long, value_parser = bit_rate)]
        link: Option<f64>,
        #[arg(long)]
        utilization: Option<f64>,
        /// Line bits per payload byte.
        #[arg(long)]
        wire_bits: Option<f64>,
        #[arg(long, value_parser = bytes)]
        brick_capacity: Option<f64>,
        #[arg(long)]
        shipping_days: Option<f64>,
    },
    /// Hardware growth factors in a given survey year.
    Timeline {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        year: Option<u32>,
        #[arg(long)]
        moore: Option<f64>,
        #[arg(long)]
        capacity_doubling: Option<f64>,
        #[arg(long)]
        exponent: Option<f64>,
    },
    /// Database (re)load rates.
    Load {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_parser = bytes)]
        indexed: Option<f64>,
        #[arg(long)]
        window_days: Option<f64>,
        #[arg(long)]
        bricks: Option<u64>,
        /// Imaging stream rate for the peak load estimate.
        #[arg(long, value_parser = byte_rate, default_value = "170MB/s")]
        stream_rate: f64,
        #[arg(long, default_value_t = 0.12)]
        catalog_fraction: f64,
    },
    /// Every reference figure, computed against the quoted value.
    Reference,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub objects: u64,
    #[arg(long, default_value_t = 50)]
    pub passes: u32,
    #[arg(long, default_value_t = 7.0)]
    pub cadence_days: f64,
    #[arg(long, default_value_t = 0.0)]
    pub periodic_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub transient_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mover_fraction: f64,
    #[arg(long, default_value_t = 0.01)]
    pub flux_sigma: f64,
    /// Position noise, e.g. `0.1s`.
    #[arg(long, value_parser = arcsec, default_value = "0.1s")]
    pub pos_sigma: f64,
    /// JSON survey configuration; explicit flags are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "survey")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Binary detection file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub partitions: usize,
    #[arg(long, value_parser = degrees, default_value = "1d")]
    pub zone_height: f64,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_parser = degrees, default_value = "1d")]
    pub zone_height: f64,
}

#[derive(Debug, Args)]
pub struct MasterArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_parser = arcsec, default_value = "1s")]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// `ra,dec,radius` with unit suffixes, e.g. `10d,20d,5d`.
    #[arg(long, conflicts_with = "polygon")]
    pub cone: Option<String>,
    /// Polygon file: one `nx ny nz offset` halfspace per line.
    #[arg(long)]
    pub polygon: Option<PathBuf>,
    /// Conjunction of comparisons, e.g. `flux>10 and pass_id<=25`.
    #[arg(long = "where", default_value = "true")]
    pub predicate: String,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    /// Store whose masters (or detections, if no masters) are joined.
    #[arg(long, conflicts_with = "between")]
    pub store: Option<PathBuf>,
    /// Join detections even when the store has masters.
    #[arg(long)]
    pub detections: bool,
    #[arg(long, value_parser = arcsec, default_value = "60s")]
    pub theta: f64,
    /// Two `ra,dec` positions; prints their separation.
    #[arg(long, num_args = 2, value_names = ["RA,DEC", "RA,DEC"])]
    pub between: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Lowest trial frequency, cycles per day.
    #[arg(long, default_value_t = 0.01)]
    pub f_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub f_max: f64,
    #[arg(long, default_value_t = 4000)]
    pub n_freq: usize,
}

impl GridArgs {
    fn grid(&self) -> FrequencyGrid {
        FrequencyGrid { f_min: self.f_min, f_max: self.f_max, n_steps: self.n_freq }
    }
}

#[derive(Debug, Args)]
pub struct LcArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Only this master.
    #[arg(long)]
    pub master: Option<u64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct TriggerArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Binary detection stream.
    #[arg(long)]
    pub stream: PathBuf,
    /// Match radius; defaults to the one the masters were built with.
    #[arg(long, value_parser = arcsec)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub k_sigma: f64,
    /// Put the stream into (mjd, zone) order first.
    #[arg(long)]
    pub sort: bool,
    /// Detections per flushed batch.
    #[arg(long, default_value_t = 1000)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct MoversArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Degrees per day.
    #[arg(long, default_value_t = 1.0)]
    pub rate_max: f64,
    #[arg(long, value_parser = arcsec, default_value = "1s")]
    pub residual_max: f64,
    #[arg(long, default_value_t = 3)]
    pub min_length: usize,
    /// Degrees per day above which tracks are flagged as debris.
    #[arg(long, default_value_t = 0.75)]
    pub debris_rate: f64,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Use detections even when the store has masters.
    #[arg(long)]
    pub detections: bool,
    /// Number of uniform random points; defaults to ten times the data count.
    #[arg(long)]
    pub randoms: Option<usize>,
    /// Log-spaced bins `lo,hi,n`, e.g. `0.5d,10d,10`.
    #[arg(long, default_value = "0.5d,10d,10")]
    pub bins: String,
    #[arg(long, default_value = "dual-tree")]
    pub mode: PairCountMode,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    /// Numeric CSV, one point per row; a non-numeric first row is a header.
    #[arg(long, conflicts_with = "store")]
    pub input: Option<PathBuf>,
    /// Use master features: log10 mean flux and log10(1 + variance / err^2).
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value = "exact")]
    pub mode: EmMode,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tau: f64,
    /// Write the fitted model as JSON.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Write per-point outlier scores as CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Bench20Args {
    #[arg(long)]
    pub seed: u64,
    /// Working directory for the reference store; a fresh temporary one by default.
    #[arg(long)]
    pub work: Option<PathBuf>,
    /// Query file; the shipped set by default.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub objects: u64,
    #[arg(long, default_value_t = 20)]
    pub passes: u32,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let f = cli.format;
    match &cli.command {
        Command::Plan(p) => plan(p, f, out),
        Command::Gen(a) => gen(a, f, out),
        Command::Ingest(a) => {
            let m = store::ingest_file(&a.input, a.partitions, &a.out, a.zone_height)?;
            let mut t = Table::new(&["records", "partitions", "data_bytes", "load_seconds", "load_rate_mb_s"]);
            t.push(vec![
                m.total_records.to_string(),
                m.partitions.len().to_string(),
                m.data_bytes().to_string(),
                format!("{:.6}", m.created.load_seconds),
                format!("{:.3}", m.created.load_rate / units::MB),
            ]);
            t.emit(f, out)
        }
        Command::Index(a) => {
            let mut s = Store::open(&a.store)?;
            let idx = store::build_indexes(&mut s, a.zone_height)?;
            let summary = s.manifest().index.clone();
            let mut t = Table::new(&["zones", "index_bytes", "index_fraction"]);
            t.push(vec![
                idx.histogram().len().to_string(),
                summary.as_ref().map_or(0, |s| s.index_bytes).to_string(),
                format!("{:.6}", summary.map_or(0.0, |s| s.index_fraction)),
            ]);
            t.emit(f, out)
        }
        Command::Master(a) => {
            let mut s = Store::open(&a.store)?;
            let cat = store::build_master(&mut s, a.radius)?;
            let mut t = Table::new(&["detections", "masters", "reduction"]);
            let n = s.manifest().total_records;
            t.push(vec![
                n.to_string(),
                cat.masters.len().to_string(),
                format!("{:.3}", n as f64 / cat.masters.len().max(1) as f64),
            ]);
            t.emit(f, out)
        }
        Command::Query(a) => query(a, f, out, err),
        Command::Neighbors(a) => neighbors(a, f, out, err),
        Command::Lc(a) => lc(a, f, out),
        Command::Classify(a) => classify(a, f, out, err),
        Command::Trigger(a) => trigger(a, f, out),
        Command::Movers(a) => movers(a, f, out),
        Command::Corr(a) => corr(a, f, out),
        Command::Em(a) => em(a, f, out),
        Command::Bench20(a) => {
            let queries = match &a.queries {
                Some(p) => std::fs::read_to_string(p)?,
                None => TWENTY_QUERIES.to_string(),
            };
            let rows = bench20(a.seed, a.work.as_deref(), &queries, a.objects, a.passes, err)?;
            let mut t = Table::new(&["query", "status", "exit_code", "seconds", "output_bytes", "command"]);
            for r in &rows {
                t.push(vec![
                    r.index.to_string(),
                    if r.exit_code == 0 { "ok" } else { "fail" }.to_string(),
                    r.exit_code.to_string(),
                    format!("{:.4}", r.seconds),
                    r.output_bytes.to_string(),
                    r.command.clone(),
                ]);
            }
            t.emit(f, out)?;
            match rows.iter().find(|r| r.exit_code != 0) {
                Some(r) => Err(Error::validation(format!("query {} exited with {}", r.index, r.exit_code))),
                None => Ok(()),
            }
        }
    }
}

fn load_scenario(arg: &ScenarioArg) -> Result<Scenario> {
    match &arg.scenario {
        Some(p) => Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(p)?))?),
        None => Ok(Scenario::default()),
    }
}

fn set<T: Copy>(target: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *target = v;
    }
}

fn row(t: &mut Table, quantity: &str, value: f64, unit: &str) {
    t.push(vec![quantity.to_string(), format!("{value:.6}"), unit.to_string()]);
}

fn plan(cmd: &PlanCommand, f: Format, out: &mut dyn Write) -> Result<()> {
    use units::{GB, MB, SECONDS_PER_HOUR, TB};
    let mut t = Table::new(&["quantity", "value", "unit"]);
    match cmd {
        PlanCommand::Acquisition { scenario, sky_pixels, bytes_per_pixel, passes_per_year, camera_gigapixels, exposure, night_hours } => {
            let mut s = load_scenario(scenario)?.acquisition;
            set(&mut s.sky_pixels, *sky_pixels);
            set(&mut s.bytes_per_pixel, *bytes_per_pixel);
            set(&mut s.passes_per_year, *passes_per_year);
            set(&mut s.camera_gigapixels, *camera_gigapixels);
            set(&mut s.exposure_seconds, *exposure);
            set(&mut s.night_hours, *night_hours);
            let p = planner::plan_acquisition(&s)?;
            row(&mut t, "bytes_per_pass", p.bytes_per_pass / TB, "TB");
            row(&mut t, "bytes_per_year", p.bytes_per_year / TB, "TB");
            row(&mut t, "bytes_per_night", p.bytes_per_night / TB, "TB");
            row(&mut t, "stream_rate", p.stream_rate / MB, "MB/s");
        }
        PlanCommand::Pipeline { scenario, stream_rate, cpu_rate, years_ahead, moore } => {
            let mut s = load_scenario(scenario)?.pipeline;
            set(&mut s.stream_rate, *stream_rate);
            set(&mut s.per_cpu_rate, *cpu_rate);
            set(&mut s.years_ahead, *years_ahead);
            set(&mut s.moore_doubling_period, *moore);
            row(&mut t, "cpus", planner::plan_pipeline(&s)? as f64, "cpus");
        }
        PlanCommand::Storage { scenario, objects_per_pass, passes, bytes_per_object, index_overhead, master_reduction, variable_fraction } => {
            let mut s = load_scenario(scenario)?.storage;
            set(&mut s.objects_per_pass, *objects_per_pass);
            set(&mut s.passes, *passes);
            set(&mut s.bytes_per_object, *bytes_per_object);
            set(&mut s.index_overhead_fraction, *index_overhead);
            set(&mut s.master_reduction_factor, *master_reduction);
            set(&mut s.variable_pixel_fraction, *variable_fraction);
            let p = planner::plan_storage(&s)?;
            row(&mut t, "catalog", p.catalog_bytes / TB, "TB");
            row(&mut t, "indexed", p.indexed_bytes / TB, "TB");
            row(&mut t, "master", p.master_bytes / TB, "TB");
            row(&mut t, "coadd", p.coadd_bytes / TB, "TB");
        }
        PlanCommand::Scan { scenario, db, disks, disk_rate, disks_per_server, target_hours } => {
            let mut s = load_scenario(scenario)?.scan;
            set(&mut s.db_bytes, *db);
            set(&mut s.disk_count, *disks);
            set(&mut s.per_disk_rate, *disk_rate);
            set(&mut s.per_server_disk_capacity, *disks_per_server);
            let p = planner::plan_scan(&s)?;
            row(&mut t, "aggregate_rate", p.aggregate_rate / GB, "GB/s");
            row(&mut t, "scan_time", p.scan_seconds / SECONDS_PER_HOUR, "h");
            row(&mut t, "servers_needed", p.servers_needed as f64, "servers");
            if let Some(h) = target_hours {
                let (n, per_disk) = planner::disks_for_scan_time(s.db_bytes, s.per_disk_rate, h * SECONDS_PER_HOUR)?;
                row(&mut t, "disks_for_target", n as f64, "disks");
                row(&mut t, "bytes_per_disk_at_target", per_disk / TB, "TB");
            }
        }
        PlanCommand::Transfer { scenario, total, link, utilization, wire_bits, brick_capacity, shipping_days } => {
            let mut s = load_scenario(scenario)?.transfer;
            set(&mut s.total_bytes, *total);
            set(&mut s.link_rate, *link);
            set(&mut s.link_utilization, *utilization);
            set(&mut s.wire_bits_per_byte, *wire_bits);
            set(&mut s.brick_capacity, *brick_capacity);
            set(&mut s.brick_shipping_days, *shipping_days);
            let p = planner::plan_transfer(&s)?;
            row(&mut t, "effective_net_rate", p.effective_net_rate / MB, "MB/s");
            row(&mut t, "network_time", p.network_days, "days");
            row(&mut t, "bricks", p.brick_count as f64, "bricks");
            row(&mut t, "sneakernet_time", p.sneakernet_days, "days");
        }
        PlanCommand::Timeline { scenario, year, moore, capacity_doubling, exponent } => {
            let mut s = load_scenario(scenario)?.timeline;
            set(&mut s.year, *year);
            set(&mut s.moore_doubling_years, *moore);
            set(&mut s.capacity_doubling_years, *capacity_doubling);
            set(&mut s.disk_rate_growth_exponent, *exponent);
            let r = planner::plan_hardware_timeline(&s)?;
            row(&mut t, "cpu_speed_factor", r.cpu_speed_factor, "x");
            row(&mut t, "pipeline_cpu_factor", r.pipeline_cpu_factor, "x");
            row(&mut t, "analysis_cpu_factor", r.analysis_cpu_factor, "x");
            row(&mut t, "disk_capacity_factor", r.disk_capacity_factor, "x");
            row(&mut t, "disk_speed_factor", r.disk_speed_factor, "x");
            row(&mut t, "disk_count_factor", r.disk_count_factor, "x");
            row(&mut t, "stored_bytes_factor", r.stored_bytes_factor, "x");
        }
        PlanCommand::Load { scenario, indexed, window_days, bricks, stream_rate, catalog_fraction } => {
            let mut s = load_scenario(scenario)?.load;
            set(&mut s.indexed_bytes, *indexed);
            set(&mut s.window_days, *window_days);
            set(&mut s.bricks, *bricks);
            let p = planner::plan_load(s.indexed_bytes, s.window_days, s.bricks)?;
            row(&mut t, "reload_rate", p.rate_total / MB, "MB/s");
            row(&mut t, "reload_rate_per_brick", p.rate_per_brick / MB, "MB/s");
            row(&mut t, "peak_load_rate", planner::peak_load_rate(*stream_rate, *catalog_fraction)? / MB, "MB/s");
            row(&mut t, "reload_window", s.window_days, "days");
        }
        PlanCommand::Reference => {
            let mut t = Table::new(&["quantity", "unit", "computed", "quoted", "relative_error"]);
            for r in planner::reference_report()? {
                t.push(vec![
                    r.quantity.to_string(),
                    r.unit.to_string(),
                    format!("{:.6}", r.computed),
                    format!("{}", r.quoted),
                    format!("{:.4}", r.relative_error()),
                ]);
            }
            return t.emit(f, out);
        }
    }
    t.emit(f, out)
}

fn gen(a: &GenArgs, f: Format, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(p)?))?,
        None => SurveyConfig {
            n_objects: a.objects,
            passes: a.passes,
            cadence_days: a.cadence_days,
            periodic_fraction: a.periodic_fraction,
            transient_fraction: a.transient_fraction,
            mover_fraction: a.mover_fraction,
            flux_sigma_fraction: a.flux_sigma,
            position_sigma_arcsec: a.pos_sigma,
            ..Default::default()
        },
    };
    cfg.seed = a.seed;
    let survey = skygen::generate_survey(&cfg)?;
    let m = skygen::write_survey(&survey, &cfg, &a.out)?;
    let mut t = Table::new(&["kind", "objects"]);
    for (k, n) in &m.counts_by_kind {
        t.push(vec![k.to_string(), n.to_string()]);
    }
    t.push(vec!["detections".to_string(), m.detections.to_string()]);
    t.emit(f, out)
}

fn parse_position(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::validation(format!("expected `ra,dec`, got {s:?}")));
    }
    let ra = units::parse_angle_deg(parts[0])?;
    let dec = units::parse_angle_deg(parts[1])?;
    sphere::validate_radec(ra, dec)?;
    Ok((ra, dec))
}

fn parse_cone(s: &str) -> Result<Region> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::validation(format!("expected `ra,dec,radius`, got {s:?}")));
    }
    let (ra, dec) = parse_position(&format!("{},{}", parts[0], parts[1]))?;
    Region::cone_deg(ra, dec, units::parse_angle_deg(parts[2])?)
}

const DETECTION_HEADER: [&str; 10] =
    ["det_id", "pass_id", "mjd", "ra", "dec", "flux", "flux_err", "flags", "zone", "master_id"];

fn query(a: &QueryArgs, f: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let predicate = Predicate::parse(&a.predicate)?;
    let region = match (&a.cone, &a.polygon) {
        (Some(c), _) => Some(parse_cone(c)?),
        (None, Some(p)) => Some(Region::read_polygon_file(p)?),
        (None, None) => None,
    };
    let s = Store::open(&a.store)?;
    let res = store::scan(&s, &predicate, region.as_ref(), a.workers)?;
    let mut t = Table::new(&DETECTION_HEADER);
    for d in &res.records {
        t.push(vec![
            d.det_id.to_string(),
            d.pass_id.to_string(),
            d.mjd.to_string(),
            d.ra.to_string(),
            d.dec.to_string(),
            d.flux.to_string(),
            d.flux_err.to_string(),
            d.flags.to_string(),
            d.zone.to_string(),
            d.master_id.to_string(),
        ]);
    }
    t.emit(f, out)?;
    let st = &res.stats;
    writeln!(
        err,
        "scanned {} records ({} bytes) with {} workers in {:.3} s, {:.1} MB/s; {} matched",
        st.records_scanned,
        st.bytes_read,
        st.workers,
        st.wall_seconds,
        st.rate / units::MB,
        st.records_matched
    )?;
    Ok(())
}

/// Positions to join or correlate: masters when present, else detections.
fn catalog_positions(s: &Store, force_detections: bool) -> Result<Vec<(u64, UnitVec)>> {
    if !force_detections {
        if let Some(cat) = s.load_masters()? {
            return Ok(cat.masters.iter().map(|m| (m.master_id, m.position())).collect());
        }
    }
    Ok(s.read_all()?.iter().map(|d| (d.det_id, d.position())).collect())
}

fn neighbors(a: &NeighborsArgs, f: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if let Some(pair) = &a.between {
        let p = parse_position(&pair[0])?;
        let q = parse_position(&pair[1])?;
        let rad = sphere::angular_distance(p, q)?;
        let mut t = Table::new(&["separation_deg", "separation_arcsec"]);
        t.push(vec![rad.to_degrees().to_string(), units::rad_to_arcsec(rad).to_string()]);
        return t.emit(f, out);
    }
    let path = a.store.as_ref().ok_or_else(|| Error::validation("neighbors needs --store or --between"))?;
    let s = Store::open(path)?;
    let cat = catalog_positions(&s, a.detections)?;
    let table = sphere::neighbors_join(&cat, a.theta)?;
    let mut t = Table::new(&["id_a", "id_b", "separation_arcsec"]);
    for p in &table.pairs {
        t.push(vec![p.id_a.to_string(), p.id_b.to_string(), p.separation_arcsec.to_string()]);
    }
    t.emit(f, out)?;
    writeln!(err, "{} ordered pairs, {} distance evaluations", table.pairs.len(), table.distance_evaluations)?;
    Ok(())
}

fn masters_or_fail(s: &Store) -> Result<store::MasterCatalog> {
    s.load_masters()?.ok_or_else(|| Error::validation("store has no master catalog; run `master` first"))
}

fn lc(a: &LcArgs, f: Format, out: &mut dyn Write) -> Result<()> {
    let s = Store::open(&a.store)?;
    let cat = masters_or_fail(&s)?;
    let dets = s.read_all()?;
    let grid = a.grid.grid();
    grid.validate()?;
    let epochs = timedomain::pass_epochs(&dets);
    let masters: Vec<store::MasterObject> = match a.master {
        Some(id) => vec![cat.get(id).cloned().ok_or_else(|| Error::validation(format!("no master {id}")))?],
        None => cat.masters.clone(),
    };
    let wanted: std::collections::HashSet<u64> = masters.iter().map(|m| m.master_id).collect();
    let members: Vec<store::Detection> = dets.into_iter().filter(|d| wanted.contains(&d.master_id)).collect();
    let curves = timedomain::light_curves(&members, &masters, &epochs)?;
    let mut t = Table::new(&[
        "master_id",
        "n_points",
        "chi2_const",
        "dof",
        "reduced_chi2",
        "best_frequency",
        "best_period",
        "periodic_power",
        "amplitude_fraction",
        "classification",
    ]);
    for c in &curves {
        let fit = timedomain::fit_lightcurve(c, &grid)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        t.push(vec![
            fit.master_id.to_string(),
            fit.n_points.to_string(),
            fit.chi2_const.to_string(),
            fit.dof.to_string(),
            fit.reduced_chi2().to_string(),
            opt(fit.periodic.map(|p| p.best_frequency)),
            opt(fit.best_period()),
            opt(fit.periodic.map(|p| p.periodic_power)),
            opt(fit.periodic.map(|p| p.amplitude_fraction)),
            fit.classification.to_string(),
        ]);
    }
    t.emit(f, out)
}

fn classify(a: &ClassifyArgs, f: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let s = Store::open(&a.store)?;
    let mut cat = masters_or_fail(&s)?;
    let dets = s.read_all()?;
    let grid = a.grid.grid();
    grid.validate()?;
    timedomain::classify_catalog(&dets, &mut cat, &grid)?;
    save_masters(&s, &cat)?;
    let mut t = Table::new(&["master_id", "n_detections", "classification"]);
    let mut counts = std::collections::BTreeMap::new();
    for m in &cat.masters {
        *counts.entry(m.classification.to_string()).or_insert(0u64) += 1;
        t.push(vec![m.master_id.to_string(), m.n_detections.to_string(), m.classification.to_string()]);
    }
    t.emit(f, out)?;
    for (c, n) in counts {
        writeln!(err, "{c}: {n}")?;
    }
    Ok(())
}

fn read_detection_file(path: &Path) -> Result<Vec<store::Detection>> {
    store::record::decode_all(&std::fs::read(path)?)
}

fn trigger(a: &TriggerArgs, f: Format, out: &mut dyn Write) -> Result<()> {
    let s = Store::open(&a.store)?;
    let cat = masters_or_fail(&s)?;
    let mut stream = read_detection_file(&a.stream)?;
    let config = TriggerConfig {
        match_radius_arcsec: a.radius.unwrap_or(cat.match_radius_arcsec),
        k_sigma: a.k_sigma,
        zone_height_deg: s.manifest().zone_height,
    };
    if a.sort {
        timedomain::stream_order(&mut stream, config.zone_height_deg);
    }
    if f == Format::Csv {
        timedomain::trigger::run_trigger_csv(&stream, &cat.masters, config, a.batch, out)?;
        return Ok(());
    }
    let alerts = timedomain::run_trigger(&stream, &cat.masters, config)?;
    let mut t = Table::new(&timedomain::trigger::ALERT_CSV_HEADER.split(',').collect::<Vec<_>>());
    for al in &alerts {
        t.push(al.csv_line().split(',').map(str::to_string).collect());
    }
    t.emit(f, out)
}

fn movers(a: &MoversArgs, f: Format, out: &mut dyn Write) -> Result<()> {
    let s = Store::open(&a.store)?;
    let cat = masters_or_fail(&s)?;
    let dets = s.read_all()?;
    let orphans = timedomain::orphans(&dets, &cat);
    let config = MoverConfig {
        rate_max: a.rate_max,
        residual_max_arcsec: a.residual_max,
        min_track_length: a.min_length,
        debris_rate_cut: a.debris_rate,
    };
    let tracks = timedomain::link_movers(&orphans, config)?;
    let mut t = Table::new(&[
        "track_id",
        "n_members",
        "det_ids",
        "ref_mjd",
        "ref_ra",
        "ref_dec",
        "rate_deg_per_day",
        "position_angle_deg",
        "rms_arcsec",
        "debris_candidate",
    ]);
    for tr in &tracks {
        t.push(vec![
            tr.track_id.to_string(),
            tr.det_ids.len().to_string(),
            tr.det_ids.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            tr.ref_mjd.to_string(),
            tr.ref_ra.to_string(),
            tr.ref_dec.to_string(),
            tr.rate.to_string(),
            tr.position_angle.to_string(),
            tr.rms_arcsec.to_string(),
            tr.debris_candidate.to_string(),
        ]);
    }
    t.emit(f, out)
}

fn parse_bins(s: &str) -> Result<AngularBins> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::validation(format!("expected `lo,hi,n`, got {s:?}")));
    }
    let n: usize = parts[2].parse().map_err(|_| Error::validation(format!("bad bin count {:?}", parts[2])))?;
    AngularBins::log_spaced(units::parse_angle_deg(parts[0])?, units::parse_angle_deg(parts[1])?, n)
}

fn corr(a: &CorrArgs, f: Format, out: &mut dyn Write) -> Result<()> {
    let s = Store::open(&a.store)?;
    let data: Vec<UnitVec> = catalog_positions(&s, a.detections)?.into_iter().map(|(_, p)| p).collect();
    let bins = parse_bins(&a.bins)?;
    let mut rng = skygen::SurveyRng::new(a.seed, 0);
    let randoms: Vec<UnitVec> = (0..a.randoms.unwrap_or(10 * data.len())).map(|_| rng.unit_vec()).collect();
    let est = stats::correlation_ls(&data, &randoms, &bins, a.mode)?;
    if f == Format::Csv {
        return est.write_csv(out);
    }
    let mut t = Table::new(&stats::CORRELATION_CSV_HEADER.split(',').collect::<Vec<_>>());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in &est.bins {
        t.push(vec![
            b.lo_deg.to_string(),
            b.hi_deg.to_string(),
            b.dd.to_string(),
            b.dr.to_string(),
            b.rr.to_string(),
            opt(b.w),
            opt(b.err),
        ]);
    }
    t.emit(f, out)
}

fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(p) => points.push(p),
            Err(_) if points.is_empty() && i == 0 => continue,
            Err(_) => return Err(Error::validation(format!("non-numeric value on line {}", i + 1))),
        }
    }
    Ok(points)
}

/// Two features per master: brightness and excess variability.
pub fn master_features(cat: &store::MasterCatalog) -> Vec<Vec<f64>> {
    cat.masters
        .iter()
        .map(|m| {
            let err2 = (m.mean_flux_err * m.mean_flux_err).max(f64::MIN_POSITIVE);
            vec![m.mean_flux.abs().max(1e-12).log10(), (1.0 + m.flux_variance / err2).log10()]
        })
        .collect()
}

fn em(a: &EmArgs, f: Format, out: &mut dyn Write) -> Result<()> {
    let points = match (&a.input, &a.store) {
        (Some(p), _) => read_points_csv(p)?,
        (None, Some(s)) => master_features(&masters_or_fail(&Store::open(s)?)?),
        (None, None) => return Err(Error::validation("em needs --input or --store")),
    };
    let config = EmConfig { k: a.k, mode: a.mode, tol: a.tol, max_iter: a.max_iter, seed: a.seed, tau: a.tau, ..Default::default() };
    let (model, st) = stats::em_fit(&points, &config)?;
    if let Some(p) = &a.model_out {
        model.write_json(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    if let Some(p) = &a.scores {
        let scores = stats::outlier_scores(&model, &points)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        writeln!(w, "index,score")?;
        for (i, s) in scores.iter().enumerate() {
            writeln!(w, "{i},{s}")?;
        }
        w.flush()?;
    }
    if f == Format::Json {
        model.write_json(&mut *out)?;
        writeln!(out)?;
        return Ok(());
    }
    let mut t = Table::new(&["component", "weight", "mean", "covariance_diagonal", "iterations", "evaluations", "nodes_pruned"]);
    for j in 0..model.k() {
        let join = |v: Vec<f64>| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        t.push(vec![
            j.to_string(),
            model.weights[j].to_string(),
            join(model.means[j].clone()),
            join((0..model.dim).map(|d| model.covariances[j][d][d]).collect()),
            st.iterations.to_string(),
            st.evaluations.to_string(),
            st.nodes_pruned.to_string(),
        ]);
    }
    t.emit(f, out)
}
