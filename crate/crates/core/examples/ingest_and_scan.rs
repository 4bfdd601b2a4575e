//! Ingest a survey into a partitioned store and scan it in parallel.

use skyvault::skygen::{generate_survey, SurveyConfig};
use skyvault::sphere::Region;
use skyvault::store::{self, Predicate, Store};

fn main() -> skyvault::Result<()> {
    let survey = generate_survey(&SurveyConfig { n_objects: 5000, passes: 20, seed: 9, ..Default::default() })?;
    let dir = std::env::temp_dir().join("skyvault-example-store");
    let _ = std::fs::remove_dir_all(&dir);
    let manifest = store::ingest_detections(survey.detections, 8, &dir, 1.0, "example")?;
    println!("{} records in {} partitions", manifest.total_records, manifest.partitions.len());

    let mut s = Store::open(&dir)?;
    store::build_indexes(&mut s, 1.0)?;
    s.verify()?;

    let pred = Predicate::parse("flux>2000 and pass_id<10")?;
    let cone = Region::cone_deg(180.0, 0.0, 30.0)?;
    for workers in [1, 2, 4] {
        let out = store::scan(&s, &pred, Some(&cone), workers)?;
        println!(
            "{workers} workers: {} matches of {} scanned, {:.0} MB/s",
            out.stats.records_matched,
            out.stats.records_scanned,
            out.stats.rate / 1e6
        );
    }
    Ok(())
}
