//! Link unmatched detections into moving-object tracks.

use skyvault::skygen::{generate_survey, SurveyConfig};
use skyvault::store::master::cross_match;
use skyvault::store::Detection;
use skyvault::timedomain::{link_movers, orphans, MoverConfig};

fn main() -> skyvault::Result<()> {
    let config = SurveyConfig { n_objects: 1000, passes: 8, cadence_days: 1.0, mover_fraction: 0.05, seed: 5, ..Default::default() };
    let survey = generate_survey(&config)?;
    let catalog = cross_match(&survey.detections, 1.0)?;
    let links: std::collections::HashMap<u64, u64> = catalog.links.iter().copied().collect();
    let dets: Vec<Detection> = survey.detections.iter().map(|d| Detection { master_id: links[&d.det_id], ..*d }).collect();
    let lonely = orphans(&dets, &catalog);
    let tracks = link_movers(&lonely, MoverConfig::default())?;
    println!("{} orphan detections -> {} tracks", lonely.len(), tracks.len());
    for t in tracks.iter().take(8) {
        println!(
            "track {:>3}: {} points, {:.3} deg/day at PA {:5.1}, rms {:.2}\"{}",
            t.track_id,
            t.det_ids.len(),
            t.rate,
            t.position_angle,
            t.rms_arcsec,
            if t.debris_candidate { ", debris?" } else { "" }
        );
    }
    Ok(())
}
