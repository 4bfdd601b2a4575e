//! Cross-match repeated detections into master objects.

use skyvault::skygen::{generate_survey, SurveyConfig};
use skyvault::store::master::cross_match;

fn main() -> skyvault::Result<()> {
    let config = SurveyConfig { n_objects: 1000, passes: 50, seed: 1, ..Default::default() };
    let survey = generate_survey(&config)?;
    let catalog = cross_match(&survey.detections, 1.0)?;
    println!(
        "{} detections -> {} masters ({}x smaller)",
        survey.detections.len(),
        catalog.masters.len(),
        survey.detections.len() / catalog.masters.len()
    );
    let m = &catalog.masters[0];
    println!(
        "master {}: ra {:.5} dec {:.5}, {} detections, mean flux {:.1} +/- {:.1}",
        m.master_id, m.ra, m.dec, m.n_detections, m.mean_flux, m.mean_flux_err
    );
    let chains = catalog.chains();
    println!("chain of master 1 starts with {:?}", &chains[&1][..5]);
    Ok(())
}
