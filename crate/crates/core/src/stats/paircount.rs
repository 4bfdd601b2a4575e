//! Angular pair counting, brute force and dual-tree.
//!
//! Bins are given as angles and compared internally as squared chord
//! lengths, which are monotone in angle. Both modes classify a pair by the
//! same squared-chord computation, so their histograms agree exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{KdTree, Node, UnitVec, DEFAULT_BUCKET};

/// Slack on node-pair bounds so a whole-node decision never disagrees with
/// the per-pair squared chord.
const BOUND_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairCountMode {
    Naive,
    DualTree,
}

impl std::str::FromStr for PairCountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "dual-tree" | "dualtree" | "tree" => Ok(Self::DualTree),
            _ => Err(Error::validation(format!("unknown pair-count mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularBins {
    edges: Vec<f64>,
    chord2: Vec<f64>,
}

impl AngularBins {
    /// Edges in radians, strictly increasing within `[0, π]`.
    pub fn new(edges_rad: Vec<f64>) -> Result<Self> {
        if edges_rad.len() < 2 {
            return Err(Error::validation("need at least two bin edges"));
        }
        if edges_rad.iter().any(|e| !(0.0..=std::f64::consts::PI).contains(e)) {
            return Err(Error::validation("bin edges must lie in [0, pi]"));
        }
        if edges_rad.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("bin edges must strictly increase"));
        }
        let chord2 = edges_rad.iter().map(|e| (2.0 * (e / 2.0).sin()).powi(2)).collect();
        Ok(Self { edges: edges_rad, chord2 })
    }

    pub fn from_degrees(edges_deg: &[f64]) -> Result<Self> {
        Self::new(edges_deg.iter().map(|d| d.to_radians()).collect())
    }

    /// `n` logarithmically spaced bins between `lo_deg` and `hi_deg`.
    pub fn log_spaced(lo_deg: f64, hi_deg: f64, n: usize) -> Result<Self> {
        if !(lo_deg > 0.0 && hi_deg > lo_deg) || n == 0 {
            return Err(Error::validation("log bins need 0 < lo < hi and n >= 1"));
        }
        let r = (hi_deg / lo_deg).ln();
        let mut edges: Vec<f64> = (0..=n).map(|i| lo_deg * (r * i as f64 / n as f64).exp()).collect();
        edges[n] = hi_deg;
        Self::from_degrees(&edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bin of a squared chord: half-open bins, the last one closed.
    pub fn bin_of(&self, d2: f64) -> Option<usize> {
        let c = &self.chord2;
        let last = c.len() - 1;
        if d2 < c[0] || d2 > c[last] {
            return None;
        }
        if d2 == c[last] {
            return Some(last - 1);
        }
        Some(c.partition_point(|&e| e <= d2) - 1)
    }

    /// Bin that wholly contains `[lo, hi]`, if any.
    fn bin_containing(&self, lo: f64, hi: f64) -> Option<usize> {
        let b = self.bin_of(lo)?;
        let upper = self.chord2[b + 1];
        let inside = if b + 2 == self.chord2.len() { hi <= upper } else { hi < upper };
        inside.then_some(b)
    }

    fn outside(&self, lo: f64, hi: f64) -> bool {
        hi < self.chord2[0] || lo > self.chord2[self.chord2.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCountHistogram {
    /// Radians.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_pairs: u64,
    pub distance_evaluations: u64,
}

impl PairCountHistogram {
    fn empty(bins: &AngularBins, total_pairs: u64) -> Self {
        Self { edges: bins.edges.clone(), counts: vec![0; bins.len()], total_pairs, distance_evaluations: 0 }
    }
}

fn d2(a: UnitVec, b: UnitVec) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Counts unordered pairs of distinct entries of `points` per bin.
pub fn pair_count(points: &[UnitVec], bins: &AngularBins, mode: PairCountMode) -> Result<PairCountHistogram> {
    if points.len() < 2 {
        return Err(Error::validation("pair counting needs at least 2 points"));
    }
    let n = points.len() as u64;
    let mut h = PairCountHistogram::empty(bins, n * (n - 1) / 2);
    match mode {
        PairCountMode::Naive => {
            for i in 0..points.len() {
                for j in i + 1..points.len() {
                    h.distance_evaluations += 1;
                    if let Some(b) = bins.bin_of(d2(points[i], points[j])) {
                        h.counts[b] += 1;
                    }
                }
            }
        }
        PairCountMode::DualTree => {
            let tree = KdTree::build(points.iter().enumerate().map(|(i, p)| (i as u64, *p)), DEFAULT_BUCKET);
            let mut w = Walker { bins, a: &tree, b: &tree, h: &mut h };
            if let Some(root) = tree.root() {
                w.auto(root);
            }
        }
    }
    Ok(h)
}

/// Counts all pairs `(a, b)` with `a` from the first set and `b` from the second.
pub fn cross_count(
    first: &[UnitVec],
    second: &[UnitVec],
    bins: &AngularBins,
    mode: PairCountMode,
) -> Result<PairCountHistogram> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::validation("cross counting needs non-empty sets"));
    }
    let mut h = PairCountHistogram::empty(bins, first.len() as u64 * second.len() as u64);
    match mode {
        PairCountMode::Naive => {
            for &a in first {
                for &b in second {
                    h.distance_evaluations += 1;
                    if let Some(k) = bins.bin_of(d2(a, b)) {
                        h.counts[k] += 1;
                    }
                }
            }
        }
        PairCountMode::DualTree => {
            let ta = KdTree::build(first.iter().enumerate().map(|(i, p)| (i as u64, *p)), DEFAULT_BUCKET);
            let tb = KdTree::build(second.iter().enumerate().map(|(i, p)| (i as u64, *p)), DEFAULT_BUCKET);
            let mut w = Walker { bins, a: &ta, b: &tb, h: &mut h };
            if let (Some(ra), Some(rb)) = (ta.root(), tb.root()) {
                w.cross(ra, rb);
            }
        }
    }
    Ok(h)
}

struct Walker<'a> {
    bins: &'a AngularBins,
    a: &'a KdTree,
    b: &'a KdTree,
    h: &'a mut PairCountHistogram,
}

impl Walker<'_> {
    /// Pairs within one node of a single tree.
    fn auto(&mut self, node: &Node) {
        let n = node.len() as u64;
        if n < 2 {
            return;
        }
        let (_, hi) = node.dist2_range_node(node);
        if self.bins.outside(0.0, hi + BOUND_MARGIN) {
            return;
        }
        if let Some(b) = self.bins.bin_containing(0.0, hi + BOUND_MARGIN) {
            self.h.counts[b] += n * (n - 1) / 2;
            return;
        }
        match self.a.children(node) {
            Some((l, r)) => {
                self.auto(l);
                self.auto(r);
                self.cross(l, r);
            }
            None => {
                let pts = self.a.points();
                for i in node.start..node.end {
                    for j in i + 1..node.end {
                        self.h.distance_evaluations += 1;
                        if let Some(b) = self.bins.bin_of(d2(pts[i], pts[j])) {
                            self.h.counts[b] += 1;
                        }
                    }
                }
            }
        }
    }

    /// Pairs with one end in `x` (tree `a`) and the other in `y` (tree `b`).
    fn cross(&mut self, x: &Node, y: &Node) {
        let (lo, hi) = x.dist2_range_node(y);
        let (lo, hi) = ((lo - BOUND_MARGIN).max(0.0), hi + BOUND_MARGIN);
        if self.bins.outside(lo, hi) {
            return;
        }
        if let Some(b) = self.bins.bin_containing(lo, hi) {
            self.h.counts[b] += x.len() as u64 * y.len() as u64;
            return;
        }
        let split_x = match (x.is_leaf(), y.is_leaf()) {
            (true, true) => {
                let (pa, pb) = (self.a.points(), self.b.points());
                for i in x.start..x.end {
                    for j in y.start..y.end {
                        self.h.distance_evaluations += 1;
                        if let Some(b) = self.bins.bin_of(d2(pa[i], pb[j])) {
                            self.h.counts[b] += 1;
                        }
                    }
                }
                return;
            }
            (false, true) => true,
            (true, false) => false,
            (false, false) => x.len() >= y.len(),
        };
        if split_x {
            if let Some((l, r)) = self.a.children(x) {
                self.cross(l, y);
                self.cross(r, y);
            }
        } else if let Some((l, r)) = self.b.children(y) {
            self.cross(x, l);
            self.cross(x, r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skygen::SurveyRng;
    use proptest::prelude::*;

    fn random_points(n: usize, seed: u64) -> Vec<UnitVec> {
        let mut rng = SurveyRng::new(seed, 0);
        (0..n).map(|_| rng.unit_vec()).collect()
    }

    #[test]
    fn single_pair() {
        let pts = [UnitVec::from_radec(0.0, 0.0).unwrap(), UnitVec::from_radec(1.0, 0.0).unwrap()];
        let bins = AngularBins::from_degrees(&[0.5, 2.0]).unwrap();
        for mode in [PairCountMode::Naive, PairCountMode::DualTree] {
            assert_eq!(pair_count(&pts, &bins, mode).unwrap().counts, vec![1]);
        }
    }

    #[test]
    fn duplicate_counts_once() {
        let p = UnitVec::from_radec(10.0, 10.0).unwrap();
        let bins = AngularBins::from_degrees(&[0.0, 1.0]).unwrap();
        for mode in [PairCountMode::Naive, PairCountMode::DualTree] {
            assert_eq!(pair_count(&[p, p], &bins, mode).unwrap().counts, vec![1]);
        }
    }

    #[test]
    fn too_few_points() {
        let bins = AngularBins::from_degrees(&[0.0, 1.0]).unwrap();
        assert!(pair_count(&random_points(1, 1), &bins, PairCountMode::Naive).is_err());
        assert!(AngularBins::from_degrees(&[1.0, 1.0]).is_err());
        assert!(AngularBins::from_degrees(&[1.0]).is_err());
    }

    #[test]
    fn full_range_covers_every_pair() {
        let pts = random_points(500, 4);
        let bins = AngularBins::from_degrees(&[0.0, 30.0, 90.0, 180.0]).unwrap();
        let h = pair_count(&pts, &bins, PairCountMode::DualTree).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 500 * 499 / 2);
    }

    #[test]
    fn cross_matches_naive() {
        let a = random_points(300, 5);
        let b = random_points(400, 6);
        let bins = AngularBins::log_spaced(0.5, 20.0, 8).unwrap();
        let n = cross_count(&a, &b, &bins, PairCountMode::Naive).unwrap();
        let t = cross_count(&a, &b, &bins, PairCountMode::DualTree).unwrap();
        assert_eq!(n.counts, t.counts);
        assert!(t.distance_evaluations < n.distance_evaluations);
    }

    #[test]
    fn last_bin_is_closed() {
        let bins = AngularBins::new(vec![0.0, 0.5, 1.0]).unwrap();
        let c = (2.0 * 0.5f64.sin()).powi(2);
        assert_eq!(bins.bin_of(c), Some(1));
        assert_eq!(bins.bin_of(0.0), Some(0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dual_tree_equals_naive(seed in 0u64..1000, n in 2usize..400) {
            let pts = random_points(n, seed);
            let bins = AngularBins::log_spaced(1.0, 60.0, 6).unwrap();
            let a = pair_count(&pts, &bins, PairCountMode::Naive).unwrap();
            let b = pair_count(&pts, &bins, PairCountMode::DualTree).unwrap();
            prop_assert_eq!(a.counts, b.counts);
        }
    }
}
