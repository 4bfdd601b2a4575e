//! Precompute the Neighbors table at 60 arcsec for a dense patch.

use skyvault::skygen::{advance, SurveyRng};
use skyvault::sphere::{neighbors_join, UnitVec};

fn main() -> skyvault::Result<()> {
    let mut rng = SurveyRng::new(3, 0);
    let center = UnitVec::from_radec(150.0, 2.0)?;
    let catalog: Vec<(u64, UnitVec)> = (1..=5000)
        .map(|id| (id, advance(center, rng.range(0.0, 360.0), rng.uniform().sqrt().to_radians())))
        .collect();
    let table = neighbors_join(&catalog, 60.0)?;
    println!("{} ordered pairs, {} distance evaluations", table.pairs.len(), table.distance_evaluations);
    for p in table.pairs.iter().take(5) {
        println!("{:>5} {:>5} {:6.2}\"", p.id_a, p.id_b, p.separation_arcsec);
    }
    Ok(())
}
