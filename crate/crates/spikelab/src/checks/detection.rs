//! Detection and estimation on simulated spectra: outlier detachment across
//! the transition, spike recovery, and subcritical bias detection.

use serde::{Deserialize, Serialize};

use super::{row, top, CheckReport, Criterion, RunSettings, TableRow};
use crate::ensemble::{resolve_directions, DirectionSpec, Ensemble, EnsembleConfig};
use crate::exec::map_trials;
use crate::inference::{detect_subcritical_bias, estimate_supercritical_spikes, DEFAULT_DOMINANCE, DEFAULT_GAP_FACTOR};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetachmentParams {
    /// Detached means `mu_1 > gamma_+ + gap_factor K^{-2/3}`.
    pub gap_factor: f64,
    pub min_fraction: Option<f64>,
    pub max_fraction: Option<f64>,
    pub trials: Option<usize>,
}

impl Default for DetachmentParams {
    fn default() -> Self {
        Self {
            gap_factor: DEFAULT_GAP_FACTOR,
            min_fraction: None,
            max_fraction: None,
            trials: None,
        }
    }
}

/// Fraction of trials whose top eigenvalue clears the detachment threshold.
pub fn detachment_fraction(mu1: &[f64], threshold: f64) -> f64 {
    if mu1.is_empty() {
        return 0.0;
    }
    mu1.iter().filter(|&&m| m > threshold).count() as f64 / mu1.len() as f64
}

pub fn outlier_detachment(ens: &Ensemble, p: &DetachmentParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "outlier_detachment";
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let threshold = a.gamma_plus + p.gap_factor * (a.k as f64).powf(-2.0 / 3.0);
    let mu1 = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        Ok(top(&draw, ens.spiked(), 1, false, run.solver)?.values[0])
    })?;
    let rows = mu1.iter().enumerate().map(|(t, &m)| row(NAME, t, 1, "mu_1", m)).collect();
    let frac = detachment_fraction(&mu1, threshold);
    let criteria = match (p.min_fraction, p.max_fraction) {
        (None, None) => Vec::new(),
        (lo, hi) => vec![Criterion::new("fraction", frac, lo, hi)],
    };
    Ok(CheckReport::new(NAME, &run, criteria)
        .with_rows(rows)
        .note(format!("detached fraction {frac:.6} with threshold {threshold:.6}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationParams {
    /// 1-based spike rank whose estimate is scored.
    pub spike: usize,
    pub band: [f64; 2],
    pub min_fraction: f64,
    pub gap_factor: f64,
    pub trials: Option<usize>,
}

impl Default for EstimationParams {
    fn default() -> Self {
        Self {
            spike: 1,
            band: [1.9, 2.1],
            min_fraction: 0.95,
            gap_factor: DEFAULT_GAP_FACTOR,
            trials: None,
        }
    }
}

pub fn spike_estimation(ens: &Ensemble, p: &EstimationParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "spike_estimation";
    let run = run.with_trials(p.trials);
    if p.spike == 0 || p.spike > ens.population.spec.len().max(1) {
        return Err(Error::config("checks.spike_estimation.spike", "no such spike"));
    }
    if !(p.band[0] < p.band[1]) {
        return Err(Error::config("checks.spike_estimation.band", "need lower < upper"));
    }
    let a = ens.aspect;
    let count = ens.outliers.s_plus + 2;
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let mu = top(&draw, ens.spiked(), count, false, run.solver)?.values;
        let est = estimate_supercritical_spikes(&mu, &a, p.gap_factor)?;
        Ok((est.len(), est.get(p.spike - 1).map(|e| e.d_hat)))
    })?;
    let mut rows = Vec::new();
    let mut hits = 0usize;
    for (t, (found, d)) in per_trial.iter().enumerate() {
        rows.push(row(NAME, t, 0, "estimates", *found as f64));
        if let Some(d) = d {
            rows.push(row(NAME, t, p.spike, "d_hat", *d));
            if *d >= p.band[0] && *d <= p.band[1] {
                hits += 1;
            }
        }
    }
    let frac = hits as f64 / run.trials.max(1) as f64;
    Ok(CheckReport::new(NAME, &run, vec![Criterion::at_least("in_band_fraction", frac, p.min_fraction)]).with_rows(rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubcriticalParams {
    /// 1-based inclusive index range of the eigenvectors averaged.
    pub range: [usize; 2],
    pub candidate: DirectionSpec,
    pub factor: f64,
    /// Whether the detector is expected to fire on this ensemble.
    pub expect_fire: bool,
    /// Second ensemble on which the detector must stay silent; `None` skips it.
    pub null_ensemble: Option<EnsembleConfig>,
    pub min_fraction: f64,
    pub trials: Option<usize>,
}

impl Default for SubcriticalParams {
    fn default() -> Self {
        Self {
            range: [1, 10],
            candidate: DirectionSpec::Coordinate(0),
            factor: DEFAULT_DOMINANCE,
            expect_fire: true,
            null_ensemble: None,
            min_fraction: 0.95,
            trials: None,
        }
    }
}

fn fire_fraction(ens: &Ensemble, p: &SubcriticalParams, run: &RunSettings, tag: &str, rows: &mut Vec<TableRow>) -> Result<f64> {
    const NAME: &str = "subcritical_detection";
    const PATH: &str = "checks.subcritical_detection";
    let [lo, hi] = p.range;
    let outliers = ens.outliers.s_plus;
    if lo == 0 || hi < lo || hi > ens.aspect.k {
        return Err(Error::config(format!("{PATH}.range"), format!("invalid range [{lo}, {hi}]")));
    }
    if lo <= outliers {
        return Err(Error::config(format!("{PATH}.range"), format!("range touches the {outliers} outlier indices")));
    }
    let w = resolve_directions(std::slice::from_ref(&p.candidate), ens.aspect.m, None)
        .map_err(|e| Error::config(format!("{PATH}.candidate"), e.to_string()))?
        .remove(0);
    let results = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let tp = top(&draw, ens.spiked(), hi, true, run.solver)?;
        detect_subcritical_bias(&tp.vectors[lo - 1..hi], &w, (lo, hi), outliers, ens.aspect.phi, p.factor, None)
    })?;
    for (t, r) in results.iter().enumerate() {
        rows.push(row(NAME, t, 0, &format!("{tag}_score"), r.score));
    }
    Ok(results.iter().filter(|r| r.fires).count() as f64 / results.len().max(1) as f64)
}

pub fn subcritical_detection(ens: &Ensemble, p: &SubcriticalParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "subcritical_detection";
    let run = run.with_trials(p.trials);
    let mut rows = Vec::new();
    let frac = fire_fraction(ens, p, &run, "primary", &mut rows)?;
    let mut criteria = vec![if p.expect_fire {
        Criterion::at_least("fires", frac, p.min_fraction)
    } else {
        Criterion::at_least("silent", 1.0 - frac, p.min_fraction)
    }];
    if let Some(cfg) = &p.null_ensemble {
        let null = cfg.build().map_err(|e| match e {
            Error::Config { path, message } => {
                Error::config(format!("checks.subcritical_detection.null_{path}"), message)
            }
            other => other,
        })?;
        let f = fire_fraction(&null, p, &run, "null", &mut rows)?;
        criteria.push(Criterion::at_least("null_silent", 1.0 - f, p.min_fraction));
    }
    Ok(CheckReport::new(NAME, &run, criteria).with_rows(rows))
}
