//! Light-curve model fitting and chain classification.
//!
//! The constant model is the inverse-variance weighted mean. The periodic
//! model is a floating-mean single sinusoid `a + b sin(2πft) + c cos(2πft)`
//! fitted by weighted least squares at every frequency of a uniform grid;
//! its power is the fraction of the constant model's χ² it removes.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Classification, Detection, MasterCatalog, MasterObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightCurve {
    pub master_id: u64,
    pub epochs: Vec<f64>,
    pub fluxes: Vec<f64>,
    pub flux_errs: Vec<f64>,
}

impl LightCurve {
    pub fn new(master_id: u64, epochs: Vec<f64>, fluxes: Vec<f64>, flux_errs: Vec<f64>) -> Result<Self> {
        let lc = Self { master_id, epochs, fluxes, flux_errs };
        lc.validate()?;
        Ok(lc)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.epochs.len();
        if n == 0 {
            return Err(Error::validation("light curve needs at least one point"));
        }
        if self.fluxes.len() != n || self.flux_errs.len() != n {
            return Err(Error::validation("light curve arrays differ in length"));
        }
        if let Some(i) = (1..n).find(|&i| !(self.epochs[i] > self.epochs[i - 1])) {
            return Err(Error::validation(format!(
                "epochs must strictly increase (index {i}: {} after {})",
                self.epochs[i],
                self.epochs[i - 1]
            )));
        }
        if let Some(e) = self.flux_errs.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::validation(format!("flux errors must be > 0 (got {e})")));
        }
        if self.fluxes.iter().chain(&self.epochs).any(|v| !v.is_finite()) {
            return Err(Error::validation("light curve contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Uniform trial-frequency grid in cycles per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub n_steps: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { f_min: 0.01, f_max: 2.0, n_steps: 4000 }
    }
}

impl FrequencyGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_max >= self.f_min && self.f_max.is_finite()) || self.n_steps == 0 {
            return Err(Error::validation("frequency grid needs 0 < f_min <= f_max and n_steps >= 1"));
        }
        Ok(())
    }

    pub fn frequency(&self, i: usize) -> f64 {
        if self.n_steps == 1 {
            self.f_min
        } else {
            self.f_min + (self.f_max - self.f_min) * i as f64 / (self.n_steps - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// χ²/dof of the constant model above which a chain is variable.
    pub variability_chi2_dof: f64,
    pub periodic_power: f64,
    /// Significance (flux/err) a point needs to count as active.
    pub transient_sigma: f64,
    pub transient_min_run: usize,
    /// Points outside a transient's active window must stay below this.
    pub quiet_sigma: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            variability_chi2_dof: 3.0,
            periodic_power: 0.5,
            transient_sigma: 5.0,
            transient_min_run: 3,
            quiet_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicFit {
    pub best_frequency: f64,
    /// Fraction of the constant-model χ² explained by the sinusoid.
    pub periodic_power: f64,
    /// Sinusoid semi-amplitude over the fitted mean.
    pub amplitude_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightCurveFit {
    pub master_id: u64,
    pub n_points: usize,
    pub weighted_mean: f64,
    pub chi2_const: f64,
    pub dof: usize,
    /// Absent for fewer than three points.
    pub periodic: Option<PeriodicFit>,
    pub classification: Classification,
}

impl LightCurveFit {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            0.0
        } else {
            self.chi2_const / self.dof as f64
        }
    }

    pub fn best_period(&self) -> Option<f64> {
        self.periodic.map(|p| 1.0 / p.best_frequency)
    }
}

fn weighted_constant(lc: &LightCurve) -> (f64, f64) {
    let mut sw = 0.0;
    let mut swf = 0.0;
    for (f, e) in lc.fluxes.iter().zip(&lc.flux_errs) {
        let w = 1.0 / (e * e);
        sw += w;
        swf += w * f;
    }
    let mean = swf / sw;
    let chi2 = lc
        .fluxes
        .iter()
        .zip(&lc.flux_errs)
        .map(|(f, e)| ((f - mean) / e).powi(2))
        .sum();
    (mean, chi2)
}

/// Weighted least-squares sinusoid at one frequency: `(chi2, mean, amplitude)`.
fn sinusoid_fit(lc: &LightCurve, freq: f64) -> Option<(f64, f64, f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let omega = std::f64::consts::TAU * freq;
    let t0 = lc.epochs[0];
    for ((t, f), e) in lc.epochs.iter().zip(&lc.fluxes).zip(&lc.flux_errs) {
        let w = 1.0 / (e * e);
        let (s, c) = (omega * (t - t0)).sin_cos();
        let row = [1.0, s, c];
        for i in 0..3 {
            atb[i] += w * row[i] * f;
            for j in 0..3 {
                ata[i][j] += w * row[i] * row[j];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| ata[i][j]);
    let coef = m.cholesky()?.solve(&nalgebra::Vector3::from(atb));
    let chi2 = lc
        .epochs
        .iter()
        .zip(&lc.fluxes)
        .zip(&lc.flux_errs)
        .map(|((t, f), e)| {
            let (s, c) = (omega * (t - t0)).sin_cos();
            ((f - coef[0] - coef[1] * s - coef[2] * c) / e).powi(2)
        })
        .sum();
    Some((chi2, coef[0], coef[1].hypot(coef[2])))
}

/// Fits the constant and periodic models and applies the default
/// static / variable / transient thresholds.
pub fn fit_lightcurve(lc: &LightCurve, grid: &FrequencyGrid) -> Result<LightCurveFit> {
    fit_lightcurve_with(lc, grid, &Thresholds::default())
}

pub fn fit_lightcurve_with(lc: &LightCurve, grid: &FrequencyGrid, thresholds: &Thresholds) -> Result<LightCurveFit> {
    lc.validate()?;
    grid.validate()?;
    let (mean, chi2_const) = weighted_constant(lc);
    let n = lc.len();
    let periodic = if n >= 3 {
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 0..grid.n_steps {
            let f = grid.frequency(i);
            let Some((chi2, a, amp)) = sinusoid_fit(lc, f) else { continue };
            let power = if chi2_const > 0.0 { (1.0 - chi2 / chi2_const).clamp(0.0, 1.0) } else { 0.0 };
            if best.is_none_or(|b| power > b.1) {
                best = Some((f, power, if a != 0.0 { amp / a.abs() } else { 0.0 }));
            }
        }
        best.map(|(f, p, a)| PeriodicFit { best_frequency: f, periodic_power: p, amplitude_fraction: a })
    } else {
        None
    };
    let mut fit = LightCurveFit {
        master_id: lc.master_id,
        n_points: n,
        weighted_mean: mean,
        chi2_const,
        dof: n.saturating_sub(1),
        periodic,
        classification: Classification::Static,
    };
    fit.classification = if is_transient(lc, thresholds) {
        Classification::Transient
    } else if fit.reduced_chi2() <= thresholds.variability_chi2_dof {
        Classification::Static
    } else {
        Classification::Variable
    };
    Ok(fit)
}

/// One contiguous run of at least `min_run` significant points with every
/// point outside it consistent with zero, and at least one such point.
fn is_transient(lc: &LightCurve, t: &Thresholds) -> bool {
    let sig: Vec<f64> = lc.fluxes.iter().zip(&lc.flux_errs).map(|(f, e)| f / e).collect();
    let active: Vec<usize> = (0..sig.len()).filter(|&i| sig[i] > t.transient_sigma).collect();
    let (Some(&first), Some(&last)) = (active.first(), active.last()) else { return false };
    let contiguous = active.len() == last - first + 1;
    let quiet_outside = (0..sig.len())
        .filter(|&i| i < first || i > last)
        .all(|i| sig[i].abs() < t.quiet_sigma);
    let has_outside = first > 0 || last + 1 < sig.len();
    contiguous && active.len() >= t.transient_min_run && quiet_outside && has_outside
}

/// Final class of a master from its chain and light-curve fit.
pub fn classify_chain(master: &MasterObject, lc: &LightCurve, fit: &LightCurveFit) -> Result<Classification> {
    classify_chain_with(master, lc, fit, &Thresholds::default())
}

pub fn classify_chain_with(
    master: &MasterObject,
    lc: &LightCurve,
    fit: &LightCurveFit,
    thresholds: &Thresholds,
) -> Result<Classification> {
    if lc.master_id != master.master_id || fit.master_id != master.master_id {
        return Err(Error::validation(format!(
            "inputs disagree on master id ({}, {}, {})",
            master.master_id, lc.master_id, fit.master_id
        )));
    }
    lc.validate()?;
    if master.n_detections == 1 {
        return Ok(if master.flags != 0 { Classification::Defect } else { Classification::MoverCandidate });
    }
    if is_transient(lc, thresholds) {
        return Ok(Classification::Transient);
    }
    if fit.reduced_chi2() <= thresholds.variability_chi2_dof {
        return Ok(Classification::Static);
    }
    // aperiodic variability still counts as variable; the periodic power
    // only says whether a period is meaningful
    Ok(Classification::Variable)
}

/// Whether the fit carries a credible period under `thresholds`.
pub fn is_periodic(fit: &LightCurveFit, thresholds: &Thresholds) -> bool {
    fit.periodic.is_some_and(|p| p.periodic_power > thresholds.periodic_power)
}

/// Mean epoch of every pass, used to place forced non-detections.
pub fn pass_epochs(detections: &[Detection]) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    for d in detections {
        let e = acc.entry(d.pass_id).or_insert((0.0, 0));
        e.0 += d.mjd;
        e.1 += 1;
    }
    acc.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect()
}

/// Builds one light curve per master from linked detections. Passes in which
/// a master has no detection get a forced zero-flux point with the master's
/// mean flux error, so a burst appears against a quiet baseline.
pub fn light_curves(
    detections: &[Detection],
    masters: &[MasterObject],
    epochs: &BTreeMap<u32, f64>,
) -> Result<Vec<LightCurve>> {
    let index: HashMap<u64, usize> = masters.iter().enumerate().map(|(i, m)| (m.master_id, i)).collect();
    let mut members: Vec<Vec<&Detection>> = vec![Vec::new(); masters.len()];
    for d in detections {
        match index.get(&d.master_id) {
            Some(&i) => members[i].push(d),
            None => {
                return Err(Error::validation(format!(
                    "detection {} links to unknown master {}",
                    d.det_id, d.master_id
                )))
            }
        }
    }
    let mut out = Vec::with_capacity(masters.len());
    for (m, dets) in masters.iter().zip(members) {
        let mut points: Vec<(f64, f64, f64)> =
            dets.iter().map(|d| (d.mjd, f64::from(d.flux), f64::from(d.flux_err))).collect();
        if m.n_detections > 1 {
            let seen: std::collections::HashSet<u32> = dets.iter().map(|d| d.pass_id).collect();
            let err = m.mean_flux_err.max(f64::MIN_POSITIVE);
            points.extend(epochs.iter().filter(|(p, _)| !seen.contains(p)).map(|(_, &t)| (t, 0.0, err)));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points.dedup_by(|b, a| b.0 == a.0);
        out.push(LightCurve {
            master_id: m.master_id,
            epochs: points.iter().map(|p| p.0).collect(),
            fluxes: points.iter().map(|p| p.1).collect(),
            flux_errs: points.iter().map(|p| p.2).collect(),
        });
    }
    Ok(out)
}

/// Fits every master's light curve and stores the chain class on the
/// catalog. Fits run in parallel; results are in master order.
pub fn classify_catalog(
    detections: &[Detection],
    catalog: &mut MasterCatalog,
    grid: &FrequencyGrid,
) -> Result<Vec<LightCurveFit>> {
    use rayon::prelude::*;
    let epochs = pass_epochs(detections);
    let curves = light_curves(detections, &catalog.masters, &epochs)?;
    let fits: Vec<(LightCurveFit, Classification)> = curves
        .par_iter()
        .zip(catalog.masters.par_iter())
        .map(|(lc, m)| {
            let fit = fit_lightcurve(lc, grid)?;
            let class = classify_chain(m, lc, &fit)?;
            Ok((fit, class))
        })
        .collect::<Result<_>>()?;
    for (m, (_, c)) in catalog.masters.iter_mut().zip(&fits) {
        m.classification = *c;
    }
    Ok(fits.into_iter().map(|(f, _)| f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skygen::SurveyRng;

    fn constant_lc(n: usize, seed: u64) -> LightCurve {
        let mut rng = SurveyRng::new(seed, 0);
        let epochs: Vec<f64> = (0..n).map(|i| i as f64 * 3.0 + rng.uniform()).collect();
        let fluxes = (0..n).map(|_| 100.0 + rng.normal()).collect();
        LightCurve::new(1, epochs, fluxes, vec![1.0; n]).unwrap()
    }

    #[test]
    fn constant_source_is_static() {
        let fit = fit_lightcurve(&constant_lc(50, 3), &FrequencyGrid::default()).unwrap();
        let r = fit.reduced_chi2();
        assert!((0.5..=1.5).contains(&r), "{r}");
        assert_eq!(fit.classification, Classification::Static);
    }

    #[test]
    fn recovers_injected_period() {
        let mut rng = SurveyRng::new(17, 0);
        let mut epochs: Vec<f64> = (0..40).map(|_| rng.range(0.0, 100.0)).collect();
        epochs.sort_by(f64::total_cmp);
        let fluxes: Vec<f64> = epochs
            .iter()
            .map(|t| 100.0 * (1.0 + 0.3 * (std::f64::consts::TAU * t / 2.5).sin()) * (1.0 + 0.01 * rng.normal()))
            .collect();
        let lc = LightCurve::new(1, epochs, fluxes, vec![1.0; 40]).unwrap();
        let fit = fit_lightcurve(&lc, &FrequencyGrid { f_min: 0.01, f_max: 2.0, n_steps: 8000 }).unwrap();
        let p = fit.best_period().unwrap();
        assert!((p - 2.5).abs() / 2.5 < 0.01, "{p}");
        assert_eq!(fit.classification, Classification::Variable);
        assert!(is_periodic(&fit, &Thresholds::default()));
    }

    #[test]
    fn two_points_fit_constant_only() {
        let lc = LightCurve::new(1, vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        let fit = fit_lightcurve(&lc, &FrequencyGrid::default()).unwrap();
        assert!(fit.periodic.is_none());
        assert_eq!(fit.dof, 1);
    }

    #[test]
    fn bad_light_curves() {
        assert!(LightCurve::new(1, vec![], vec![], vec![]).is_err());
        assert!(LightCurve::new(1, vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(LightCurve::new(1, vec![1.0], vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn burst_is_transient() {
        let epochs: Vec<f64> = (0..20).map(f64::from).collect();
        let fluxes: Vec<f64> = (0..20).map(|i| if (8..12).contains(&i) { 50.0 } else { 0.0 }).collect();
        let lc = LightCurve::new(4, epochs, fluxes, vec![1.0; 20]).unwrap();
        let fit = fit_lightcurve(&lc, &FrequencyGrid::default()).unwrap();
        assert_eq!(fit.classification, Classification::Transient);
    }

    fn master(id: u64, n: u64, flags: u32) -> MasterObject {
        MasterObject {
            master_id: id,
            ra: 0.0,
            dec: 0.0,
            n_detections: n,
            mean_flux: 1.0,
            flux_variance: 0.0,
            mean_flux_err: 1.0,
            first_mjd: 0.0,
            last_mjd: 0.0,
            flags,
            classification: Classification::Unclassified,
        }
    }

    #[test]
    fn single_flagged_detection_is_defect() {
        let lc = LightCurve::new(2, vec![0.0], vec![5.0], vec![1.0]).unwrap();
        let fit = fit_lightcurve(&lc, &FrequencyGrid::default()).unwrap();
        assert_eq!(classify_chain(&master(2, 1, 4), &lc, &fit).unwrap(), Classification::Defect);
        assert_eq!(classify_chain(&master(2, 1, 0), &lc, &fit).unwrap(), Classification::MoverCandidate);
        assert!(classify_chain(&master(3, 1, 0), &lc, &fit).is_err());
    }

    #[test]
    fn scaling_keeps_best_frequency() {
        let mut rng = SurveyRng::new(2, 0);
        let mut epochs: Vec<f64> = (0..30).map(|_| rng.range(0.0, 60.0)).collect();
        epochs.sort_by(f64::total_cmp);
        let fluxes: Vec<f64> = epochs.iter().map(|t| 10.0 + (t * 1.3).sin() + 0.1 * rng.normal()).collect();
        let grid = FrequencyGrid { f_min: 0.05, f_max: 1.0, n_steps: 500 };
        let a = LightCurve::new(1, epochs.clone(), fluxes.clone(), vec![0.1; 30]).unwrap();
        let b = LightCurve::new(1, epochs, fluxes.iter().map(|f| f * 7.0).collect(), vec![0.1; 30]).unwrap();
        let fa = fit_lightcurve(&a, &grid).unwrap().periodic.unwrap();
        let fb = fit_lightcurve(&b, &grid).unwrap().periodic.unwrap();
        assert_eq!(fa.best_frequency, fb.best_frequency);
    }
}
