//! Generate a small seeded survey and look at what came out.

use skyvault::skygen::{generate_survey, write_survey, ObjectKind, SurveyConfig};

fn main() -> skyvault::Result<()> {
    let config = SurveyConfig {
        n_objects: 500,
        passes: 20,
        seed: 42,
        periodic_fraction: 0.1,
        transient_fraction: 0.05,
        mover_fraction: 0.05,
        ..Default::default()
    };
    let survey = generate_survey(&config)?;
    for kind in [ObjectKind::Static, ObjectKind::Periodic, ObjectKind::Transient, ObjectKind::Mover] {
        println!("{kind:<10} {}", survey.count_by_kind(kind));
    }
    println!("{} detections over {} passes", survey.detections.len(), config.passes);

    let dir = std::env::temp_dir().join("skyvault-example-survey");
    let manifest = write_survey(&survey, &config, &dir)?;
    println!("wrote {} detections to {}", manifest.detections, dir.display());

    // same seed, same survey
    assert_eq!(generate_survey(&config)?.detections, survey.detections);
    Ok(())
}
