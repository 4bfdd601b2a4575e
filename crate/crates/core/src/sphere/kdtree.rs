//! Bucketed kd-tree over unit vectors.
//!
//! Splits cycle on the axis of widest extent at the median; leaves hold at
//! most `bucket` points. Points are stored in tree order so every node owns
//! a contiguous `start..end` range.

use super::geometry::{Region, UnitVec};

pub const DEFAULT_BUCKET: usize = 32;

const NO_CHILD: u32 = u32::MAX;

/// Slack applied to bound comparisons so that pruning never rejects a point
/// the exact per-point predicate would accept.
const BOUND_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub start: usize,
    pub end: usize,
    left: u32,
    right: u32,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Range of `n · p` over the node's box.
    fn dot_range(&self, n: UnitVec) -> (f64, f64) {
        let n = n.as_array();
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..3 {
            let a = n[i] * self.lo[i];
            let b = n[i] * self.hi[i];
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    /// Squared distance range from a point to the node's box.
    pub fn dist2_range_point(&self, p: [f64; 3]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..3 {
            let below = self.lo[i] - p[i];
            let above = p[i] - self.hi[i];
            let gap = below.max(above).max(0.0);
            lo += gap * gap;
            let far = (p[i] - self.lo[i]).abs().max((p[i] - self.hi[i]).abs());
            hi += far * far;
        }
        (lo, hi)
    }

    /// Squared distance range between any point of `self` and any point of `other`.
    pub fn dist2_range_node(&self, other: &Node) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..3 {
            let gap = (other.lo[i] - self.hi[i]).max(self.lo[i] - other.hi[i]).max(0.0);
            lo += gap * gap;
            let far = (self.hi[i] - other.lo[i]).abs().max((other.hi[i] - self.lo[i]).abs());
            hi += far * far;
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    points: Vec<UnitVec>,
    ids: Vec<u64>,
}

/// Result of a tree query plus the number of exact per-point predicate
/// evaluations it needed.
#[derive(Debug, Clone, Default)]
pub struct QueryResult {
    pub ids: Vec<u64>,
    pub evaluations: u64,
}

impl KdTree {
    pub fn build(items: impl IntoIterator<Item = (u64, UnitVec)>, bucket: usize) -> Self {
        let bucket = bucket.max(1);
        let (ids, points): (Vec<u64>, Vec<UnitVec>) = items.into_iter().unzip();
        let mut tree = KdTree {
            nodes: Vec::with_capacity(2 * points.len() / bucket + 1),
            points,
            ids,
        };
        let mut order: Vec<usize> = (0..tree.points.len()).collect();
        if !order.is_empty() {
            tree.build_node(&mut order, 0, bucket);
        }
        tree.points = order.iter().map(|&i| tree.points[i]).collect();
        tree.ids = order.iter().map(|&i| tree.ids[i]).collect();
        tree
    }

    fn build_node(&mut self, order: &mut [usize], offset: usize, bucket: usize) -> u32 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in order.iter() {
            let p = self.points[i].as_array();
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            start: offset,
            end: offset + order.len(),
            left: NO_CHILD,
            right: NO_CHILD,
        });
        if order.len() <= bucket {
            return idx;
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = order.len() / 2;
        let points = &self.points;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a].as_array()[axis].total_cmp(&points[b].as_array()[axis])
        });
        let (left, right) = order.split_at_mut(mid);
        let l = self.build_node(left, offset, bucket);
        let r = self.build_node(right, offset + mid, bucket);
        let node = &mut self.nodes[idx as usize];
        node.left = l;
        node.right = r;
        idx
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn root(&self) -> Option<&Node> {
        self.nodes.first()
    }

    pub fn children(&self, node: &Node) -> Option<(&Node, &Node)> {
        if node.is_leaf() {
            None
        } else {
            Some((&self.nodes[node.left as usize], &self.nodes[node.right as usize]))
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Points in tree order.
    pub fn points(&self) -> &[UnitVec] {
        &self.points
    }

    /// Ids in tree order, parallel to [`KdTree::points`].
    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Ids of all points inside `region`, in tree order.
    pub fn region_search(&self, region: &Region) -> QueryResult {
        let mut out = QueryResult::default();
        if let Some(root) = self.root() {
            self.region_rec(root, region, &mut out);
        }
        out
    }

    fn region_rec(&self, node: &Node, region: &Region, out: &mut QueryResult) {
        match classify(node, region) {
            Overlap::Outside => {}
            Overlap::Inside => out.ids.extend_from_slice(&self.ids[node.start..node.end]),
            Overlap::Partial => match self.children(node) {
                Some((l, r)) => {
                    self.region_rec(l, region, out);
                    self.region_rec(r, region, out);
                }
                None => {
                    for i in node.start..node.end {
                        out.evaluations += 1;
                        if region.contains(self.points[i]) {
                            out.ids.push(self.ids[i]);
                        }
                    }
                }
            },
        }
    }

    /// Visits every stored point whose chord distance to `center` may be at
    /// most `sqrt(chord2_max)`. The callback gets the tree-order index and
    /// decides itself; the return value counts callback invocations.
    pub fn for_each_candidate(
        &self,
        center: UnitVec,
        chord2_max: f64,
        mut visit: impl FnMut(usize),
    ) -> u64 {
        let mut evaluations = 0;
        let Some(root) = self.root() else { return 0 };
        let p = center.as_array();
        let limit = chord2_max * (1.0 + BOUND_EPS) + BOUND_EPS * BOUND_EPS;
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if node.dist2_range_point(p).0 > limit {
                continue;
            }
            match self.children(node) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for i in node.start..node.end {
                        evaluations += 1;
                        visit(i);
                    }
                }
            }
        }
        evaluations
    }

    /// Nearest stored point within `max_angle` radians of `center`.
    /// Ties closer than `tie_eps` radians break toward the lower id.
    pub fn nearest_within(&self, center: UnitVec, max_angle: f64, tie_eps: f64) -> Option<(u64, f64)> {
        let chord = super::geometry::chord_of_angle(max_angle);
        let mut best: Option<(u64, f64)> = None;
        self.for_each_candidate(center, chord * chord, |i| {
            let d = center.angle_to(self.points[i]);
            if d > max_angle {
                return;
            }
            let id = self.ids[i];
            best = match best {
                None => Some((id, d)),
                Some((bid, bd)) => {
                    if d < bd - tie_eps || ((d - bd).abs() <= tie_eps && id < bid) {
                        Some((id, d))
                    } else {
                        Some((bid, bd))
                    }
                }
            };
        });
        best
    }

    /// Checks the structural invariants: every point in exactly one leaf and
    /// every node box containing its points.
    pub fn check_invariants(&self) -> bool {
        let mut covered = vec![0u32; self.points.len()];
        for node in &self.nodes {
            for i in node.start..node.end {
                let p = self.points[i].as_array();
                for k in 0..3 {
                    if p[k] < node.lo[k] || p[k] > node.hi[k] {
                        return false;
                    }
                }
                if node.is_leaf() {
                    covered[i] += 1;
                }
            }
        }
        covered.iter().all(|&c| c == 1)
    }
}

enum Overlap {
    Outside,
    Inside,
    Partial,
}

fn classify(node: &Node, region: &Region) -> Overlap {
    match region {
        Region::Cone { center, radius } => {
            let threshold = radius.cos();
            let (lo, hi) = node.dot_range(*center);
            if hi < threshold - BOUND_EPS {
                Overlap::Outside
            } else if lo > threshold + BOUND_EPS && *radius < std::f64::consts::PI {
                Overlap::Inside
            } else {
                Overlap::Partial
            }
        }
        Region::ConvexPolygon { halfspaces } => {
            let mut all_inside = true;
            for h in halfspaces {
                let (lo, hi) = node.dot_range(h.normal);
                if hi < h.offset - BOUND_EPS {
                    return Overlap::Outside;
                }
                if lo < h.offset + BOUND_EPS {
                    all_inside = false;
                }
            }
            if all_inside {
                Overlap::Inside
            } else {
                Overlap::Partial
            }
        }
    }
}
