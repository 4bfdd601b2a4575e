//! Angular two-point correlation of a clustered sample.

use skyvault::skygen::{advance, SurveyRng};
use skyvault::sphere::UnitVec;
use skyvault::stats::{correlation_ls, AngularBins, PairCountMode};

fn main() -> skyvault::Result<()> {
    let mut rng = SurveyRng::new(10, 0);
    let mut data: Vec<UnitVec> = Vec::new();
    // 300 clumps of 10 points each, about 0.5 deg across
    for _ in 0..300 {
        let c = rng.unit_vec();
        for _ in 0..10 {
            data.push(advance(c, rng.range(0.0, 360.0), (0.5 * rng.uniform()).to_radians()));
        }
    }
    let randoms: Vec<UnitVec> = (0..30_000).map(|_| rng.unit_vec()).collect();
    let bins = AngularBins::log_spaced(0.05, 10.0, 8)?;
    let est = correlation_ls(&data, &randoms, &bins, PairCountMode::DualTree)?;
    est.write_csv(std::io::stdout().lock())?;
    println!("# {} distance evaluations", est.distance_evaluations);
    Ok(())
}
