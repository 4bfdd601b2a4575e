//! Period search on an irregularly sampled variable, then catalog classification.

use skyvault::skygen::{generate_survey, SurveyConfig, SurveyRng};
use skyvault::store::master::cross_match;
use skyvault::store::Detection;
use skyvault::timedomain::{classify_catalog, fit_lightcurve, FrequencyGrid, LightCurve};

fn main() -> skyvault::Result<()> {
    let mut rng = SurveyRng::new(4, 0);
    let mut t: Vec<f64> = (0..40).map(|_| rng.range(0.0, 90.0)).collect();
    t.sort_by(f64::total_cmp);
    let flux: Vec<f64> = t.iter().map(|x| 500.0 + 100.0 * (std::f64::consts::TAU * x / 2.5).sin() + 5.0 * rng.normal()).collect();
    let lc = LightCurve::new(1, t, flux, vec![5.0; 40])?;
    let fit = fit_lightcurve(&lc, &FrequencyGrid::default())?;
    println!("best period {:.4} d, reduced chi2 {:.1}, {}", fit.best_period().unwrap_or(f64::NAN), fit.reduced_chi2(), fit.classification);

    let config = SurveyConfig { n_objects: 400, passes: 40, cadence_days: 3.0, periodic_fraction: 0.2, transient_fraction: 0.1, seed: 8, ..Default::default() };
    let survey = generate_survey(&config)?;
    let mut catalog = cross_match(&survey.detections, 1.0)?;
    let links: std::collections::HashMap<u64, u64> = catalog.links.iter().copied().collect();
    let dets: Vec<Detection> = survey.detections.iter().map(|d| Detection { master_id: links[&d.det_id], ..*d }).collect();
    classify_catalog(&dets, &mut catalog, &FrequencyGrid::default())?;
    let mut counts = std::collections::BTreeMap::new();
    for m in &catalog.masters {
        *counts.entry(m.classification.to_string()).or_insert(0) += 1;
    }
    println!("{counts:?}");
    Ok(())
}
