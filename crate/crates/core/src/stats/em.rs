//! Gaussian mixture EM, exact or accelerated by a kd-tree over the data.
//!
//! In kd mode each tree node carries its count, coordinate sums and sums of
//! outer products. The E-step bounds every component's responsibility over
//! a node's bounding box using the extreme eigenvalues of the covariance;
//! when no component's bounds are wider than `tau` the whole node is
//! assigned the responsibilities of its centroid and contributes through its
//! sufficient statistics.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skygen::SurveyRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmMode {
    Exact,
    Kd,
}

impl std::str::FromStr for EmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "kd" => Ok(Self::Kd),
            _ => Err(Error::validation(format!("unknown EM mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub k: usize,
    pub mode: EmMode,
    /// Stop when the log-likelihood changes by less than `tol * max(1, |LL|)`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Largest responsibility spread a kd node may have and still be pruned.
    pub tau: f64,
    pub leaf_size: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { k: 1, mode: EmMode::Exact, tol: 1e-10, max_iter: 500, seed: 1, tau: 1e-4, leaf_size: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    /// Log-likelihood at the start of every iteration.
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KdTreeStats {
    pub nodes_pruned: u64,
    /// Per point-component density evaluations, centroids included.
    pub evaluations: u64,
    pub iterations: usize,
    /// Filled in by callers that also ran the exact oracle.
    pub exact_equivalence_deviation: Option<f64>,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let m: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.covariances.len() != k {
            return Err(Error::validation("mixture needs matching weights, means and covariances"));
        }
        if self.means.iter().any(|m| m.len() != self.dim)
            || self.covariances.iter().any(|c| c.len() != self.dim || c.iter().any(|r| r.len() != self.dim))
        {
            return Err(Error::validation("mixture component dimensions disagree"));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::validation("mixture weights must be non-negative and sum to 1"));
        }
        Ok(())
    }

    fn prepared(&self) -> Result<Vec<Component>> {
        (0..self.k())
            .map(|j| {
                let cov = DMatrix::from_fn(self.dim, self.dim, |r, c| self.covariances[j][r][c]);
                Component::new(self.weights[j], self.means[j].clone(), cov)
            })
            .collect()
    }
}

/// A component with its factorisation and the quantities the E-step needs.
struct Component {
    mean: Vec<f64>,
    /// Row-major lower Cholesky factor.
    chol: Vec<f64>,
    /// Row-major inverse covariance.
    inv: Vec<f64>,
    log_norm: f64,
    eig_min: f64,
    eig_max: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let ch = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::validation("covariance is not positive definite"))?;
        let l = ch.l();
        let inv = ch.inverse();
        let eig = SymmetricEigen::new(cov).eigenvalues;
        let log_det_half: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
        Ok(Self {
            mean,
            chol: (0..d * d).map(|i| l[(i / d, i % d)]).collect(),
            inv: (0..d * d).map(|i| inv[(i / d, i % d)]).collect(),
            log_norm: weight.ln() - 0.5 * d as f64 * LN_2PI - log_det_half,
            eig_min: eig.min().max(f64::MIN_POSITIVE),
            eig_max: eig.max(),
        })
    }

    /// `ln(weight * N(x | mean, cov))`.
    fn log_density(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = x.len();
        let mut q = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * buf[j];
            }
            buf[i] = s / self.chol[i * d + i];
            q += buf[i] * buf[i];
        }
        self.log_norm - 0.5 * q
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Flattened, validated input.
struct Data {
    n: usize,
    d: usize,
    x: Vec<f64>,
    floor: Vec<f64>,
}

impl Data {
    fn new(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let d = points.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::validation("points need dimension >= 1"));
        }
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::validation("points have inconsistent dimensions"));
        }
        let x: Vec<f64> = points.iter().flatten().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("points contain non-finite values"));
        }
        let mut data = Self { n, d, x, floor: Vec::new() };
        let (_, var) = data.moments();
        data.floor = (0..d).map(|j| (1e-6 * var[j * d + j]).max(1e-12)).collect();
        Ok(data)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Mean and (maximum-likelihood) covariance of the whole set.
    fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let mut mean = vec![0.0; d];
        for i in 0..self.n {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let mut cov = vec![0.0; d * d];
        for i in 0..self.n {
            let r = self.row(i);
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= self.n as f64);
        (mean, cov)
    }

    /// Symmetrises, floors the diagonal and, only if still not positive
    /// definite, adds growing diagonal loading.
    fn regularise(&self, cov: &mut [f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut m = DMatrix::from_fn(d, d, |r, c| 0.5 * (cov[r * d + c] + cov[c * d + r]));
        for j in 0..d {
            m[(j, j)] = m[(j, j)].max(self.floor[j]);
        }
        let mut load = 1e-12;
        while m.clone().cholesky().is_none() {
            for j in 0..d {
                m[(j, j)] += load * m[(j, j)].abs().max(self.floor[j]);
            }
            load *= 10.0;
        }
        m
    }
}

/// Farthest-point style seeding: the first centre is uniform, later ones
/// are drawn with probability proportional to squared distance.
fn seed_means(data: &Data, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SurveyRng::new(seed, 0);
    let mut centres = vec![data.row(rng.below(data.n as u64) as usize).to_vec()];
    let mut d2: Vec<f64> = vec![f64::INFINITY; data.n];
    while centres.len() < k {
        let last = centres.last().cloned().unwrap_or_default();
        for (i, best) in d2.iter_mut().enumerate() {
            let dist: f64 = data.row(i).iter().zip(&last).map(|(a, b)| (a - b) * (a - b)).sum();
            *best = best.min(dist);
        }
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            d2.iter().position(|&v| {
                acc += v;
                acc > target
            })
            .unwrap_or(data.n - 1)
        } else {
            rng.below(data.n as u64) as usize
        };
        centres.push(data.row(pick).to_vec());
    }
    centres
}

/// Per-component zeroth, first and raw second moments of the responsibilities.
struct Suff {
    s0: Vec<f64>,
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
}

impl Suff {
    fn new(k: usize, d: usize) -> Self {
        Self { s0: vec![0.0; k], s1: vec![vec![0.0; d]; k], s2: vec![vec![0.0; d * d]; k] }
    }
}

struct KdNode {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    sum: Vec<f64>,
    outer: Vec<f64>,
    children: Option<(usize, usize)>,
}

struct DataTree {
    nodes: Vec<KdNode>,
    order: Vec<usize>,
}

impl DataTree {
    fn build(data: &Data, leaf: usize) -> Self {
        let mut t = Self { nodes: Vec::new(), order: (0..data.n).collect() };
        let mut order = std::mem::take(&mut t.order);
        t.node(data, &mut order, 0, leaf.max(1));
        t.order = order;
        t
    }

    fn node(&mut self, data: &Data, order: &mut [usize], offset: usize, leaf: usize) -> usize {
        let d = data.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut sum = vec![0.0; d];
        let mut outer = vec![0.0; d * d];
        for &i in order.iter() {
            let r = data.row(i);
            for a in 0..d {
                lo[a] = lo[a].min(r[a]);
                hi[a] = hi[a].max(r[a]);
                sum[a] += r[a];
                for b in 0..d {
                    outer[a * d + b] += r[a] * r[b];
                }
            }
        }
        let idx = self.nodes.len();
        self.nodes.push(KdNode { lo, hi, start: offset, end: offset + order.len(), sum, outer, children: None });
        if order.len() > leaf {
            let n = &self.nodes[idx];
            let axis = (0..d).max_by(|&a, &b| (n.hi[a] - n.lo[a]).total_cmp(&(n.hi[b] - n.lo[b]))).unwrap_or(0);
            let mid = order.len() / 2;
            order.select_nth_unstable_by(mid, |&a, &b| data.x[a * d + axis].total_cmp(&data.x[b * d + axis]));
            let (l, r) = order.split_at_mut(mid);
            let li = self.node(data, l, offset, leaf);
            let ri = self.node(data, r, offset + mid, leaf);
            self.nodes[idx].children = Some((li, ri));
        }
        idx
    }
}

struct Fitter<'a> {
    data: &'a Data,
    k: usize,
    tau: f64,
    stats: KdTreeStats,
    buf: Vec<f64>,
    logs: Vec<f64>,
}

impl Fitter<'_> {
    fn point(&mut self, comps: &[Component], i: usize, suff: &mut Suff) -> f64 {
        let d = self.data.d;
        let x = &self.data.x[i * d..(i + 1) * d];
        for (j, c) in comps.iter().enumerate() {
            self.logs[j] = c.log_density(x, &mut self.buf);
        }
        self.stats.evaluations += self.k as u64;
        let lse = log_sum_exp(&self.logs);
        for j in 0..self.k {
            let r = (self.logs[j] - lse).exp();
            suff.s0[j] += r;
            for a in 0..d {
                suff.s1[j][a] += r * x[a];
                for b in 0..d {
                    suff.s2[j][a * d + b] += r * x[a] * x[b];
                }
            }
        }
        lse
    }

    fn exact(&mut self, comps: &[Component], resp: &mut [f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.data.n {
            let x = self.data.row(i);
            for (j, c) in comps.iter().enumerate() {
                self.logs[j] = c.log_density(x, &mut self.buf);
            }
            self.stats.evaluations += self.k as u64;
            let lse = log_sum_exp(&self.logs);
            for j in 0..self.k {
                resp[i * self.k + j] = (self.logs[j] - lse).exp();
            }
            ll += lse;
        }
        ll
    }

    /// Squared Euclidean distance range from `m` to the box.
    fn box_range(lo: &[f64], hi: &[f64], m: &[f64]) -> (f64, f64) {
        let mut near = 0.0;
        let mut far = 0.0;
        for a in 0..m.len() {
            let gap = (lo[a] - m[a]).max(m[a] - hi[a]).max(0.0);
            near += gap * gap;
            let f = (m[a] - lo[a]).abs().max((m[a] - hi[a]).abs());
            far += f * f;
        }
        (near, far)
    }

    fn kd(&mut self, comps: &[Component], tree: &DataTree, node: usize, suff: &mut Suff) -> f64 {
        let nd = &tree.nodes[node];
        let k = self.k;
        let mut a_max = vec![0.0; k];
        let mut a_min = vec![0.0; k];
        for (j, c) in comps.iter().enumerate() {
            let (near, far) = Self::box_range(&nd.lo, &nd.hi, &c.mean);
            a_max[j] = c.log_norm - 0.5 * near / c.eig_max;
            a_min[j] = c.log_norm - 0.5 * far / c.eig_min;
        }
        let spread = (0..k)
            .map(|j| {
                let others = |use_max: bool| {
                    (0..k).filter(|&o| o != j).map(|o| if use_max { a_max[o] } else { a_min[o] }).collect::<Vec<_>>()
                };
                let r_hi = 1.0 / (1.0 + log_sum_exp(&others(false)).sub_exp(a_max[j]));
                let r_lo = 1.0 / (1.0 + log_sum_exp(&others(true)).sub_exp(a_min[j]));
                r_hi - r_lo
            })
            .fold(0.0f64, |m, s| if s.is_nan() { f64::INFINITY } else { m.max(s) });

        if spread <= self.tau {
            return self.prune(comps, nd, suff);
        }
        match nd.children {
            Some((l, r)) => self.kd(comps, tree, l, suff) + self.kd(comps, tree, r, suff),
            None => (nd.start..nd.end).map(|p| self.point(comps, tree.order[p], suff)).sum(),
        }
    }

    /// Assigns the centroid's responsibilities to the whole node. The
    /// returned log-likelihood is the Jensen lower bound for those
    /// responsibilities, evaluated exactly from the node's moments.
    fn prune(&mut self, comps: &[Component], nd: &KdNode, suff: &mut Suff) -> f64 {
        let d = self.data.d;
        let count = (nd.end - nd.start) as f64;
        let centroid: Vec<f64> = nd.sum.iter().map(|s| s / count).collect();
        for (j, c) in comps.iter().enumerate() {
            self.logs[j] = c.log_density(&centroid, &mut self.buf);
        }
        self.stats.evaluations += self.k as u64;
        self.stats.nodes_pruned += 1;
        let lse = log_sum_exp(&self.logs);
        let mut ll = 0.0;
        for (j, c) in comps.iter().enumerate() {
            let r = (self.logs[j] - lse).exp();
            if r <= 0.0 {
                continue;
            }
            suff.s0[j] += r * count;
            for a in 0..d {
                suff.s1[j][a] += r * nd.sum[a];
                for b in 0..d {
                    suff.s2[j][a * d + b] += r * nd.outer[a * d + b];
                }
            }
            // sum over the node of (x - m)^T inv (x - m)
            let mut q = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let m2 = nd.outer[a * d + b] - nd.sum[a] * c.mean[b] - c.mean[a] * nd.sum[b]
                        + count * c.mean[a] * c.mean[b];
                    q += c.inv[a * d + b] * m2;
                }
            }
            ll += r * (count * c.log_norm - 0.5 * q) - count * r * r.ln();
        }
        ll
    }
}

trait SubExp {
    fn sub_exp(self, other: f64) -> f64;
}

impl SubExp for f64 {
    /// `exp(self - other)`, with empty sums (negative infinity) giving 0.
    fn sub_exp(self, other: f64) -> f64 {
        if self == f64::NEG_INFINITY {
            0.0
        } else {
            (self - other).exp()
        }
    }
}

/// Fits a `k`-component Gaussian mixture.
pub fn em_fit(points: &[Vec<f64>], config: &EmConfig) -> Result<(MixtureModel, KdTreeStats)> {
    let data = Data::new(points)?;
    let k = config.k;
    if k == 0 || k > data.n {
        return Err(Error::validation(format!("need 1 <= k <= N (k = {k}, N = {})", data.n)));
    }
    if !(config.tol >= 0.0) || !(config.tau >= 0.0) || config.max_iter == 0 {
        return Err(Error::validation("tol and tau must be >= 0 and max_iter >= 1"));
    }
    let d = data.d;
    let (_, mut data_cov) = data.moments();
    let start_cov = data.regularise(&mut data_cov);
    let mut weights = vec![1.0 / k as f64; k];
    let mut means = seed_means(&data, k, config.seed);
    let mut covs = vec![start_cov; k];
    let tree = (config.mode == EmMode::Kd).then(|| DataTree::build(&data, config.leaf_size));

    let mut f = Fitter { data: &data, k, tau: config.tau, stats: KdTreeStats::default(), buf: vec![0.0; d], logs: vec![0.0; k] };
    let mut log = Vec::new();
    let mut resp = vec![0.0; if tree.is_none() { data.n * k } else { 0 }];
    for _ in 0..config.max_iter {
        let comps: Vec<Component> = (0..k)
            .map(|j| Component::new(weights[j], means[j].clone(), covs[j].clone()))
            .collect::<Result<_>>()?;
        let mut suff = Suff::new(k, d);
        let ll = match &tree {
            None => f.exact(&comps, &mut resp),
            Some(t) => f.kd(&comps, t, 0, &mut suff),
        };
        let converged = log.last().is_some_and(|&prev: &f64| (ll - prev).abs() < config.tol * ll.abs().max(1.0));
        log.push(ll);
        f.stats.iterations += 1;
        if converged {
            break;
        }
        match &tree {
            None => {
                // two-pass moments about the new means
                for j in 0..k {
                    let nk: f64 = (0..data.n).map(|i| resp[i * k + j]).sum();
                    let mut mu = vec![0.0; d];
                    for i in 0..data.n {
                        let r = resp[i * k + j];
                        for (m, v) in mu.iter_mut().zip(data.row(i)) {
                            *m += r * v;
                        }
                    }
                    if nk > 0.0 {
                        mu.iter_mut().for_each(|m| *m /= nk);
                    } else {
                        mu.clone_from(&means[j]);
                    }
                    let mut cov = vec![0.0; d * d];
                    for i in 0..data.n {
                        let r = resp[i * k + j];
                        let x = data.row(i);
                        for a in 0..d {
                            for b in 0..d {
                                cov[a * d + b] += r * (x[a] - mu[a]) * (x[b] - mu[b]);
                            }
                        }
                    }
                    if nk > 0.0 {
                        cov.iter_mut().for_each(|c| *c /= nk);
                    }
                    weights[j] = nk / data.n as f64;
                    means[j] = mu;
                    covs[j] = data.regularise(&mut cov);
                }
            }
            Some(_) => {
                for j in 0..k {
                    let nk = suff.s0[j];
                    if nk > 0.0 {
                        let mu: Vec<f64> = suff.s1[j].iter().map(|s| s / nk).collect();
                        let mut cov: Vec<f64> =
                            (0..d * d).map(|i| suff.s2[j][i] / nk - mu[i / d] * mu[i % d]).collect();
                        means[j] = mu;
                        covs[j] = data.regularise(&mut cov);
                    }
                    weights[j] = nk / data.n as f64;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let model = MixtureModel {
        dim: d,
        weights,
        means,
        covariances: covs
            .iter()
            .map(|c| (0..d).map(|r| (0..d).map(|cc| c[(r, cc)]).collect()).collect())
            .collect(),
        log_likelihood: log,
    };
    Ok((model, f.stats))
}

/// Negative log-likelihood of each point under the mixture.
pub fn outlier_scores(model: &MixtureModel, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.validate()?;
    if let Some(p) = points.iter().find(|p| p.len() != model.dim) {
        return Err(Error::validation(format!("point dimension {} does not match model dimension {}", p.len(), model.dim)));
    }
    let comps = model.prepared()?;
    let mut buf = vec![0.0; model.dim];
    let mut logs = vec![0.0; comps.len()];
    Ok(points
        .iter()
        .map(|x| {
            for (j, c) in comps.iter().enumerate() {
                logs[j] = c.log_density(x, &mut buf);
            }
            -log_sum_exp(&logs)
        })
        .collect())
}

/// Largest parameter difference between two models with matching component
/// order, each term scaled by its natural size: weights by the weight,
/// mean coordinates by the component's standard deviation along that axis,
/// covariance entries by `sqrt(C_aa C_bb)`.
pub fn model_deviation(a: &MixtureModel, b: &MixtureModel) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if a.k() != b.k() || a.dim != b.dim {
        return Err(Error::validation("models differ in shape"));
    }
    let mut worst = 0.0f64;
    for j in 0..a.k() {
        worst = worst.max((a.weights[j] - b.weights[j]).abs() / b.weights[j].max(f64::MIN_POSITIVE));
        let cb = &b.covariances[j];
        for r in 0..a.dim {
            worst = worst.max((a.means[j][r] - b.means[j][r]).abs() / cb[r][r].sqrt());
            for c in 0..a.dim {
                let scale = (cb[r][r] * cb[c][c]).sqrt();
                worst = worst.max((a.covariances[j][r][c] - cb[r][c]).abs() / scale);
            }
        }
    }
    Ok(worst)
}
