//! Cone and convex-polygon searches over a kd-tree/zone index.

use skyvault::skygen::SurveyRng;
use skyvault::sphere::{angular_distance, region_search, Halfspace, Region, SpatialIndex, UnitVec, DEFAULT_BUCKET};

fn main() -> skyvault::Result<()> {
    let mut rng = SurveyRng::new(7, 0);
    let entries: Vec<(u64, f64, f64)> = (1..=20_000)
        .map(|id| {
            let (ra, dec) = rng.unit_vec().to_radec();
            (id, ra, dec)
        })
        .collect();
    let index = SpatialIndex::build(&entries, 1.0, DEFAULT_BUCKET)?;

    let cone = Region::cone_deg(10.0, 20.0, 5.0)?;
    let hits = region_search(&index, &cone)?;
    println!("cone (10, 20, r=5 deg): {} objects", hits.len());

    // a box 0 <= ra <= 30, 0 <= dec <= 30 as four halfspaces
    let (s, c) = 30f64.to_radians().sin_cos();
    let poly = Region::polygon(vec![
        Halfspace::new(UnitVec::new(0.0, 0.0, 1.0)?, 0.0)?,
        Halfspace::new(UnitVec::new(0.0, 0.0, -1.0)?, -s)?,
        Halfspace::new(UnitVec::new(0.0, 1.0, 0.0)?, 0.0)?,
        Halfspace::new(UnitVec::new(s, -c, 0.0)?, 0.0)?,
    ])?;
    println!("box: {} objects", region_search(&index, &poly)?.len());
    println!("dec band [-1, 1]: {} objects", index.dec_band(-1.0, 1.0).len());

    let d = angular_distance((359.9, 0.0), (0.1, 0.0))?;
    println!("across ra=0: {:.3} deg", d.to_degrees());
    Ok(())
}
