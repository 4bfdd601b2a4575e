//! Landy-Szalay estimate of the angular two-point correlation function.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::UnitVec;

use super::paircount::{cross_count, pair_count, AngularBins, PairCountMode};

pub const CORRELATION_CSV_HEADER: &str = "bin_lo_deg,bin_hi_deg,dd,dr,rr,w,err";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub dd: u64,
    pub dr: u64,
    pub rr: u64,
    /// `None` when the bin has no random pairs.
    pub w: Option<f64>,
    /// Poisson error `(1 + w) / sqrt(DD)`; `None` when `w` is undefined or DD is 0.
    pub err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub bins: Vec<CorrelationBin>,
    pub distance_evaluations: u64,
}

impl CorrelationEstimate {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CORRELATION_CSV_HEADER}")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            writeln!(out, "{},{},{},{},{},{},{}", b.lo_deg, b.hi_deg, b.dd, b.dr, b.rr, opt(b.w), opt(b.err))?;
        }
        Ok(())
    }
}

/// Landy-Szalay `w = (dd - 2 dr + rr) / rr` on pair counts normalised by
/// their pair totals.
///
/// When `randoms` is the very same point set as `data`, DR is taken over
/// distinct entries only (`DR = 2 DD`, normalised by `N(N-1)`), which makes
/// the estimator vanish identically instead of picking up zero-separation
/// self pairs.
pub fn correlation_ls(
    data: &[UnitVec],
    randoms: &[UnitVec],
    bins: &AngularBins,
    mode: PairCountMode,
) -> Result<CorrelationEstimate> {
    if data.len() < 2 || randoms.len() < 2 {
        return Err(Error::validation("correlation needs at least 2 data and 2 random points"));
    }
    let nd = data.len() as f64;
    let nr = randoms.len() as f64;
    let dd = pair_count(data, bins, mode)?;
    let same = data == randoms;
    let (dr_counts, dr_norm, dr_evals) = if same {
        (dd.counts.iter().map(|c| 2 * c).collect::<Vec<_>>(), nd * (nd - 1.0), 0)
    } else {
        let h = cross_count(data, randoms, bins, mode)?;
        (h.counts, nd * nr, h.distance_evaluations)
    };
    let rr = if same { dd.clone() } else { pair_count(randoms, bins, mode)? };
    let dd_norm = nd * (nd - 1.0) / 2.0;
    let rr_norm = nr * (nr - 1.0) / 2.0;

    let edges = bins.edges();
    let out = (0..bins.len())
        .map(|b| {
            let (ddc, drc, rrc) = (dd.counts[b], dr_counts[b], rr.counts[b]);
            let w = (rrc > 0).then(|| {
                let (d, x, r) = (ddc as f64 / dd_norm, drc as f64 / dr_norm, rrc as f64 / rr_norm);
                (d - 2.0 * x + r) / r
            });
            let err = w.filter(|_| ddc > 0).map(|w| (1.0 + w) / (ddc as f64).sqrt());
            CorrelationBin {
                lo_deg: edges[b].to_degrees(),
                hi_deg: edges[b + 1].to_degrees(),
                dd: ddc,
                dr: drc,
                rr: rrc,
                w,
                err,
            }
        })
        .collect();
    Ok(CorrelationEstimate {
        bins: out,
        distance_evaluations: dd.distance_evaluations + dr_evals + if same { 0 } else { rr.distance_evaluations },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skygen::{advance, SurveyRng};

    fn uniform(n: usize, seed: u64) -> Vec<UnitVec> {
        let mut rng = SurveyRng::new(seed, 0);
        (0..n).map(|_| rng.unit_vec()).collect()
    }

    #[test]
    fn identical_sets_give_zero() {
        let pts = uniform(800, 9);
        let bins = AngularBins::log_spaced(1.0, 30.0, 8).unwrap();
        let est = correlation_ls(&pts, &pts, &bins, PairCountMode::DualTree).unwrap();
        for b in &est.bins {
            if let Some(w) = b.w {
                assert_eq!(w, 0.0);
            }
        }
    }

    #[test]
    fn empty_random_bin_is_undefined() {
        let d = uniform(50, 1);
        let r = vec![UnitVec::from_radec(0.0, 0.0).unwrap(), UnitVec::from_radec(90.0, 0.0).unwrap()];
        let bins = AngularBins::from_degrees(&[0.0, 10.0, 180.0]).unwrap();
        let est = correlation_ls(&d, &r, &bins, PairCountMode::Naive).unwrap();
        assert_eq!(est.bins[0].w, None);
        assert!(est.bins[1].w.is_some());
    }

    #[test]
    fn injected_pairs_show_clustering() {
        let mut rng = SurveyRng::new(12, 1);
        let mut data = uniform(1500, 2);
        for p in data.clone().iter().take(500) {
            data.push(advance(*p, rng.range(0.0, 360.0), 0.5f64.to_radians()));
        }
        let randoms = uniform(4000, 3);
        let bins = AngularBins::from_degrees(&[0.2, 0.4, 0.6, 1.0]).unwrap();
        let est = correlation_ls(&data, &randoms, &bins, PairCountMode::DualTree).unwrap();
        let b = &est.bins[1];
        let (w, err) = (b.w.unwrap(), b.err.unwrap());
        assert!(w > 5.0 * err, "w={w} err={err}");
        let mut csv = Vec::new();
        est.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }
}
