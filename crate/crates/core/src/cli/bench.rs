//! The twenty-query benchmark: a seeded reference store plus a fixed set of
//! command lines run in-process against it.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::skygen::{self, SurveyConfig};
use crate::store::{self, master::save_masters, Store};
use crate::timedomain::{self, FrequencyGrid};

pub const TWENTY_QUERIES: &str = include_str!("../../queries/twenty.txt");

/// Convex box `0 <= ra <= 30`, `0 <= dec <= 30` degrees.
const BOX_POLYGON: &str = "\
0 0 1 0
0 0 -1 -0.5
0 1 0 0
0.5 -0.8660254037844386 0 0
";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub index: usize,
    pub exit_code: i32,
    pub seconds: f64,
    pub output_bytes: usize,
    pub command: String,
}

fn reference_config(seed: u64, objects: u64, passes: u32) -> SurveyConfig {
    SurveyConfig {
        n_objects: objects,
        passes,
        cadence_days: 3.0,
        seed,
        periodic_fraction: 0.1,
        transient_fraction: 0.05,
        mover_fraction: 0.05,
        ..Default::default()
    }
}

/// Builds the reference store under `work`: survey, ingest, index, masters
/// and classification, plus the polygon file the queries refer to.
pub fn build_reference_store(work: &Path, seed: u64, objects: u64, passes: u32) -> Result<PathBuf> {
    let config = reference_config(seed, objects, passes);
    let survey_dir = work.join("survey");
    let survey = skygen::generate_survey(&config)?;
    skygen::write_survey(&survey, &config, &survey_dir)?;
    let store_dir = work.join("store");
    if store_dir.exists() {
        std::fs::remove_dir_all(&store_dir)?;
    }
    store::ingest_file(survey_dir.join(skygen::DETECTIONS_FILE), 8, &store_dir, 1.0)?;
    let mut s = Store::open(&store_dir)?;
    store::build_indexes(&mut s, 1.0)?;
    let mut cat = store::build_master(&mut s, 1.0)?;
    let dets = s.read_all()?;
    let grid = FrequencyGrid { n_steps: 1000, ..Default::default() };
    timedomain::classify_catalog(&dets, &mut cat, &grid)?;
    save_masters(&s, &cat)?;
    std::fs::write(work.join("box.poly"), BOX_POLYGON)?;
    Ok(store_dir)
}

/// Query lines with comments and blanks removed.
pub fn query_lines(text: &str) -> Vec<&str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect()
}

/// Builds the reference store and runs every query line through [`super::run`].
/// Progress goes to `err`; query output is counted and discarded.
pub fn bench20(
    seed: u64,
    work: Option<&Path>,
    queries: &str,
    objects: u64,
    passes: u32,
    err: &mut dyn Write,
) -> Result<Vec<BenchRow>> {
    let lines = query_lines(queries);
    if lines.is_empty() {
        return Err(Error::validation("query file has no queries"));
    }
    let (work, scratch) = match work {
        Some(w) => (w.to_path_buf(), false),
        None => (std::env::temp_dir().join(format!("skyvault-bench20-{}-{seed}", std::process::id())), true),
    };
    std::fs::create_dir_all(&work)?;
    let started = Instant::now();
    let store_dir = build_reference_store(&work, seed, objects, passes)?;
    writeln!(err, "reference store built in {:.2} s", started.elapsed().as_secs_f64())?;

    let mut rows = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let command = line
            .replace("$STORE", &store_dir.to_string_lossy())
            .replace("$WORK", &work.to_string_lossy())
            .replace("$SEED", &seed.to_string());
        let mut argv = vec!["skyvault".to_string()];
        argv.extend(
            shlex::split(&command).ok_or_else(|| Error::validation(format!("query {}: unbalanced quotes", i + 1)))?,
        );
        let mut out = Vec::new();
        let mut diag = Vec::new();
        let t0 = Instant::now();
        let code = super::run(&argv, &mut out, &mut diag);
        let seconds = t0.elapsed().as_secs_f64();
        if code != 0 {
            err.write_all(&diag)?;
        }
        rows.push(BenchRow { index: i + 1, exit_code: code, seconds, output_bytes: out.len(), command: line.to_string() });
    }
    if scratch {
        let _ = std::fs::remove_dir_all(&work);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_set_has_twenty_queries() {
        let lines = query_lines(TWENTY_QUERIES);
        assert_eq!(lines.len(), 20);
        for verb in ["query", "neighbors", "lc", "trigger", "movers", "corr", "em"] {
            assert!(lines.iter().any(|l| l.starts_with(verb)), "{verb} missing");
        }
        assert!(lines.iter().any(|l| l.contains("--cone")));
        assert!(lines.iter().any(|l| l.contains("--polygon")));
        assert!(lines.iter().any(|l| l.contains("--where")));
    }

    #[test]
    fn box_polygon_selects_the_box() {
        let r = crate::sphere::Region::parse_polygon(BOX_POLYGON).unwrap();
        let at = |ra, dec| r.contains(crate::sphere::UnitVec::from_radec(ra, dec).unwrap());
        assert!(at(15.0, 15.0));
        assert!(at(0.0, 0.0));
        assert!(!at(31.0, 15.0));
        assert!(!at(15.0, 31.0));
        assert!(!at(359.0, 15.0));
        assert!(!at(15.0, -1.0));
    }
}
