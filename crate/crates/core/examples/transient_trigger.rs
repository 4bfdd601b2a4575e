//! Stream new detections past the master catalog and raise alerts.

use skyvault::skygen::{generate_survey, SurveyConfig};
use skyvault::store::master::cross_match;
use skyvault::store::Detection;
use skyvault::timedomain::{run_trigger, stream_order, TriggerConfig};

fn main() -> skyvault::Result<()> {
    let config = SurveyConfig { n_objects: 2000, passes: 30, transient_fraction: 0.02, seed: 12, ..Default::default() };
    let survey = generate_survey(&config)?;
    let (history, mut stream): (Vec<Detection>, Vec<Detection>) = survey.detections.iter().partition(|d| d.pass_id < 10);
    let catalog = cross_match(&history, 1.0)?;

    // a flare on a known object and a brand-new source
    let m = &catalog.masters[0];
    stream.push(Detection { det_id: 1 << 40, flux: (m.mean_flux * 3.0) as f32, flux_err: m.mean_flux_err as f32, ..stream[0] });
    stream.push(Detection { det_id: (1 << 40) + 1, ra: 1.0, dec: -89.0, flux: 300.0, flux_err: 10.0, ..stream[1] });

    stream_order(&mut stream, 1.0);
    let alerts = run_trigger(&stream, &catalog.masters, TriggerConfig::default())?;
    println!("{} alerts from {} detections", alerts.len(), stream.len());
    for a in alerts.iter().take(10) {
        println!("{}", a.csv_line());
    }
    Ok(())
}
