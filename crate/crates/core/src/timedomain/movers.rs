//! Linking of unmatched detections into moving-object tracks.
//!
//! Pairs of orphans in adjacent passes each imply a motion (position, rate,
//! direction). Two pairs sharing a detection are compatible when their
//! velocities at the shared detection fall in neighbouring cells of a fixed
//! velocity grid, which is the Cartesian form of (rate, angle) space. Each
//! compatible triplet seeds a great-circle fit that is extended pass by pass,
//! refit, and trimmed of outliers.

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::skygen::tangent_basis;
use crate::sphere::{chord_of_angle, KdTree, UnitVec};
use crate::store::{Detection, MasterCatalog};
use crate::units::{arcsec_to_rad, rad_to_arcsec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoverConfig {
    /// Degrees per day.
    pub rate_max: f64,
    pub residual_max_arcsec: f64,
    pub min_track_length: usize,
    /// Tracks faster than this (degrees per day) are flagged as debris.
    pub debris_rate_cut: f64,
}

impl Default for MoverConfig {
    fn default() -> Self {
        Self { rate_max: 1.0, residual_max_arcsec: 1.0, min_track_length: 3, debris_rate_cut: 0.75 }
    }
}

impl MoverConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("rate_max", self.rate_max)?;
        require_positive("residual_max_arcsec", self.residual_max_arcsec)?;
        require_positive("debris_rate_cut", self.debris_rate_cut)?;
        if self.min_track_length < 3 {
            return Err(Error::validation("min_track_length must be at least 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoverTrack {
    pub track_id: u64,
    /// Time-ordered.
    pub det_ids: Vec<u64>,
    pub ref_mjd: f64,
    pub ref_ra: f64,
    pub ref_dec: f64,
    /// Degrees per day.
    pub rate: f64,
    /// Degrees east of north at the reference position.
    pub position_angle: f64,
    pub rms_arcsec: f64,
    pub debris_candidate: bool,
}

/// Great circle with uniform motion along it.
#[derive(Debug, Clone, Copy)]
struct MotionFit {
    u: [f64; 3],
    w: [f64; 3],
    t_ref: f64,
    phi0: f64,
    omega: f64,
}

impl MotionFit {
    fn at(&self, t: f64) -> UnitVec {
        let (s, c) = (self.phi0 + self.omega * (t - self.t_ref)).sin_cos();
        UnitVec::new_unchecked(c * self.u[0] + s * self.w[0], c * self.u[1] + s * self.w[1], c * self.u[2] + s * self.w[2])
    }
}

fn sub_proj(p: [f64; 3], n: [f64; 3]) -> [f64; 3] {
    let d = p[0] * n[0] + p[1] * n[1] + p[2] * n[2];
    [p[0] - d * n[0], p[1] - d * n[1], p[2] - d * n[2]]
}

fn norm(v: [f64; 3]) -> Option<[f64; 3]> {
    let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (l > 1e-15).then(|| [v[0] / l, v[1] / l, v[2] / l])
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Fits a great circle (plane through the origin minimising the squared
/// out-of-plane components) and a linear phase along it. Points must be time
/// ordered with at least two distinct epochs.
fn fit_motion(points: &[(f64, UnitVec)]) -> Option<MotionFit> {
    if points.len() < 2 {
        return None;
    }
    let mut m = Matrix3::zeros();
    for (_, p) in points {
        let v = nalgebra::Vector3::new(p.x, p.y, p.z);
        m += v * v.transpose();
    }
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imin();
    let pole = eig.eigenvectors.column(k);
    let pole = [pole[0], pole[1], pole[2]];
    let u = norm(sub_proj(points[0].1.as_array(), pole))?;
    let w = cross(pole, u);

    let mut phis = Vec::with_capacity(points.len());
    let mut prev = 0.0f64;
    for (_, p) in points {
        let a = p.as_array();
        let raw = dot(a, w).atan2(dot(a, u));
        let mut phi = raw;
        if !phis.is_empty() {
            phi = prev + (raw - prev + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        }
        phis.push(phi);
        prev = phi;
    }
    let t_ref = points[0].0;
    let n = points.len() as f64;
    let mt = points.iter().map(|(t, _)| t - t_ref).sum::<f64>() / n;
    let mp = phis.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stp = 0.0;
    for ((t, _), phi) in points.iter().zip(&phis) {
        let dt = t - t_ref - mt;
        stt += dt * dt;
        stp += dt * (phi - mp);
    }
    if stt <= 0.0 {
        return None;
    }
    let omega = stp / stt;
    Some(MotionFit { u, w, t_ref, phi0: mp - omega * mt, omega })
}

fn residuals(fit: &MotionFit, points: &[(f64, UnitVec)]) -> Vec<f64> {
    points.iter().map(|(t, p)| fit.at(*t).angle_to(*p)).collect()
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt()
}

/// Velocity (radians per day) at `at` along the great circle through `from`
/// and `to`, projected on the local east/north basis at `at`.
fn velocity_at(at: UnitVec, from: UnitVec, to: UnitVec, dt: f64) -> [f64; 2] {
    let (e, n) = tangent_basis(at);
    let pole = cross(from.as_array(), to.as_array());
    let Some(pole) = norm(pole) else { return [0.0, 0.0] };
    let dir = cross(pole, at.as_array());
    let speed = from.angle_to(to) / dt;
    [speed * dot(dir, e), speed * dot(dir, n)]
}

struct Candidate {
    members: Vec<usize>,
    fit: MotionFit,
    rms: f64,
}

struct Linker<'a> {
    dets: Vec<&'a Detection>,
    pos: Vec<UnitVec>,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    trees: Vec<KdTree>,
    config: MoverConfig,
    residual_max: f64,
    rate_max: f64,
}

impl<'a> Linker<'a> {
    fn new(orphans: &'a [Detection], config: MoverConfig) -> Self {
        let mut dets: Vec<&Detection> = orphans.iter().collect();
        dets.sort_by(|a, b| a.pass_id.cmp(&b.pass_id).then(a.mjd.total_cmp(&b.mjd)).then(a.det_id.cmp(&b.det_id)));
        let pos: Vec<UnitVec> = dets.iter().map(|d| d.position()).collect();
        let mut by_pass: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, d) in dets.iter().enumerate() {
            by_pass.entry(d.pass_id).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = by_pass.into_values().collect();
        let mut group_of = vec![0; dets.len()];
        for (g, members) in groups.iter().enumerate() {
            for &i in members {
                group_of[i] = g;
            }
        }
        let trees = groups
            .iter()
            .map(|members| KdTree::build(members.iter().map(|&i| (i as u64, pos[i])), crate::sphere::DEFAULT_BUCKET))
            .collect();
        Self {
            dets,
            pos,
            groups,
            group_of,
            trees,
            config,
            residual_max: arcsec_to_rad(config.residual_max_arcsec),
            rate_max: config.rate_max.to_radians(),
        }
    }

    fn dt(&self, a: usize, b: usize) -> f64 {
        self.dets[b].mjd - self.dets[a].mjd
    }

    /// Orphans in group `g` within `angle` of `center`, ascending.
    fn within(&self, g: usize, center: UnitVec, angle: f64) -> Vec<usize> {
        let c2 = chord_of_angle(angle.min(std::f64::consts::PI)).powi(2);
        let tree = &self.trees[g];
        let mut out = Vec::new();
        tree.for_each_candidate(center, c2, |k| {
            let i = tree.ids()[k] as usize;
            if center.angle_to(self.pos[i]) <= angle {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }

    /// Pairs between adjacent groups that respect the rate limit.
    fn pairs(&self) -> Vec<Vec<usize>> {
        let mut next = vec![Vec::new(); self.dets.len()];
        for g in 0..self.groups.len().saturating_sub(1) {
            for &a in &self.groups[g] {
                let horizon = self.groups[g + 1].iter().map(|&b| self.dt(a, b)).fold(0.0f64, f64::max);
                for b in self.within(g + 1, self.pos[a], self.rate_max * horizon) {
                    let dt = self.dt(a, b);
                    if dt > 0.0 && self.pos[a].angle_to(self.pos[b]) <= self.rate_max * dt {
                        next[a].push(b);
                    }
                }
            }
        }
        next
    }

    /// Compatible triplets `(a, b, c)` found by binning incoming and outgoing
    /// pair velocities at each shared detection `b`.
    fn triplets(&self, next: &[Vec<usize>]) -> Vec<[usize; 3]> {
        let mut prev = vec![Vec::new(); self.dets.len()];
        for (a, bs) in next.iter().enumerate() {
            for &b in bs {
                prev[b].push(a);
            }
        }
        let mut out = Vec::new();
        for b in 0..self.dets.len() {
            if prev[b].is_empty() || next[b].is_empty() {
                continue;
            }
            let dt_min = prev[b]
                .iter()
                .map(|&a| self.dt(a, b))
                .chain(next[b].iter().map(|&c| self.dt(b, c)))
                .fold(f64::INFINITY, f64::min);
            let cell = 2.0 * self.residual_max / dt_min;
            let key = |v: [f64; 2]| ((v[0] / cell).floor() as i64, (v[1] / cell).floor() as i64);
            let mut grid: HashMap<(i64, i64), Vec<(usize, [f64; 2])>> = HashMap::new();
            for &a in &prev[b] {
                let v = velocity_at(self.pos[b], self.pos[a], self.pos[b], self.dt(a, b));
                grid.entry(key(v)).or_default().push((a, v));
            }
            for &c in &next[b] {
                let v = velocity_at(self.pos[b], self.pos[b], self.pos[c], self.dt(b, c));
                let (kx, ky) = key(v);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(cands) = grid.get(&(kx + dx, ky + dy)) {
                            for &(a, va) in cands {
                                if (va[0] - v[0]).hypot(va[1] - v[1]) <= cell {
                                    out.push([a, b, c]);
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn points(&self, members: &[usize]) -> Vec<(f64, UnitVec)> {
        members.iter().map(|&i| (self.dets[i].mjd, self.pos[i])).collect()
    }

    fn refit(&self, members: &mut Vec<usize>) -> Option<(MotionFit, f64)> {
        members.sort_by(|&a, &b| self.dets[a].mjd.total_cmp(&self.dets[b].mjd).then(a.cmp(&b)));
        let pts = self.points(members);
        let fit = fit_motion(&pts)?;
        let r = rms(&residuals(&fit, &pts));
        Some((fit, r))
    }

    /// Grows a seed outward in time, one group at a time, refitting after
    /// every addition; then trims the worst residuals until the track fits.
    fn extend(&self, seed: [usize; 3]) -> Option<Candidate> {
        let mut members = seed.to_vec();
        let (mut fit, _) = self.refit(&mut members)?;
        let g0 = self.group_of[seed[0]];
        let g2 = self.group_of[seed[2]];
        let accept = 3.0 * self.residual_max;
        let mut order: Vec<usize> = (0..self.groups.len()).filter(|&g| g < g0 || g > g2).collect();
        order.sort_by_key(|&g| if g < g0 { (g0 - g, 1) } else { (g - g2, 0) });
        for g in order {
            let members_g = &self.groups[g];
            let (t_lo, t_hi) = members_g
                .iter()
                .map(|&i| self.dets[i].mjd)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
            let t_mid = 0.5 * (t_lo + t_hi);
            let reach = fit.omega.abs() * 0.5 * (t_hi - t_lo) + accept;
            let best = self
                .within(g, fit.at(t_mid), reach)
                .into_iter()
                .map(|i| (fit.at(self.dets[i].mjd).angle_to(self.pos[i]), i))
                .filter(|(r, _)| *r <= accept)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, i)) = best {
                members.push(i);
                fit = self.refit(&mut members)?.0;
            }
        }
        loop {
            let (f, r) = self.refit(&mut members)?;
            fit = f;
            if r <= self.residual_max || members.len() <= self.config.min_track_length {
                let rate = fit.omega.abs();
                let ok = members.len() >= self.config.min_track_length
                    && r <= self.residual_max
                    && rate <= self.rate_max * (1.0 + 1e-9);
                return ok.then_some(Candidate { members, fit, rms: r });
            }
            let res = residuals(&fit, &self.points(&members));
            let worst = (0..res.len()).max_by(|&a, &b| res[a].total_cmp(&res[b]))?;
            members.remove(worst);
        }
    }

    fn track(&self, id: u64, c: &Candidate) -> MoverTrack {
        let first = c.members[0];
        let t = self.dets[first].mjd;
        let p = c.fit.at(t);
        let (ra, dec) = p.to_radec();
        let (e, n) = tangent_basis(p);
        let phi = c.fit.phi0 + c.fit.omega * (t - c.fit.t_ref);
        let s = c.fit.omega.signum();
        let dir: [f64; 3] = std::array::from_fn(|k| s * (-phi.sin() * c.fit.u[k] + phi.cos() * c.fit.w[k]));
        let pa = dot(dir, e).atan2(dot(dir, n)).to_degrees().rem_euclid(360.0);
        let rate = c.fit.omega.abs().to_degrees();
        MoverTrack {
            track_id: id,
            det_ids: c.members.iter().map(|&i| self.dets[i].det_id).collect(),
            ref_mjd: t,
            ref_ra: ra,
            ref_dec: dec,
            rate,
            position_angle: pa,
            rms_arcsec: rad_to_arcsec(c.rms),
            debris_candidate: rate > self.config.debris_rate_cut,
        }
    }
}

/// Links orphan detections into disjoint tracks of uniform great-circle
/// motion. Detections already linked to a multi-detection master are
/// ignored. Track membership does not depend on input order.
pub fn link_movers(orphans: &[Detection], config: MoverConfig) -> Result<Vec<MoverTrack>> {
    config.validate()?;
    let linker = Linker::new(orphans, config);
    let next = linker.pairs();
    let mut covered: HashSet<usize> = HashSet::new();
    let mut candidates = Vec::new();
    for seed in linker.triplets(&next) {
        if seed.iter().all(|i| covered.contains(i)) {
            continue;
        }
        if let Some(c) = linker.extend(seed) {
            covered.extend(c.members.iter().copied());
            candidates.push(c);
        }
    }
    candidates.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then(a.rms.total_cmp(&b.rms))
            .then(linker.dets[a.members[0]].det_id.cmp(&linker.dets[b.members[0]].det_id))
    });
    let mut used = vec![false; linker.dets.len()];
    let mut tracks = Vec::new();
    for c in &candidates {
        if c.members.iter().any(|&i| used[i]) {
            continue;
        }
        for &i in &c.members {
            used[i] = true;
        }
        tracks.push(linker.track(tracks.len() as u64 + 1, c));
    }
    Ok(tracks)
}

/// Detections not linked into any multi-detection chain.
pub fn orphans(detections: &[Detection], catalog: &MasterCatalog) -> Vec<Detection> {
    detections
        .iter()
        .filter(|d| d.master_id == 0 || catalog.get(d.master_id).is_none_or(|m| m.n_detections <= 1))
        .copied()
        .collect()
}
