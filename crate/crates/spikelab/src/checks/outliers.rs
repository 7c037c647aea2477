//! Outlier locations, their `K^{-1/2}` scaling, and eigenvalue sticking.

use serde::{Deserialize, Serialize};

use super::{domination_quantile, row, top, CheckReport, Criterion, DominationProbe, RunSettings, TableRow};
use crate::ensemble::Ensemble;
use crate::exec::map_trials;
use crate::laws::{classical_location, fluctuation_scale};
use crate::spectral::{self, Solver};
use crate::{stats, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutlierLocationParams {
    /// For `|mu_i - theta(d_i)| / (Delta(d_i) K^{-1/2})`.
    pub probe: DominationProbe,
    /// Also test the first non-outlier against the right edge.
    pub edge: bool,
    /// For `|mu_{s+ + 1} - gamma_+| / K^{-2/3}`.
    pub edge_probe: DominationProbe,
    pub trials: Option<usize>,
}

impl Default for OutlierLocationParams {
    fn default() -> Self {
        Self {
            probe: DominationProbe::with_constant(5.0),
            edge: true,
            edge_probe: DominationProbe::with_constant(10.0),
            trials: None,
        }
    }
}

/// Spike positions (0-based, in the sorted spike list) of the left
/// outliers, ordered by increasing `d`, i.e. by increasing eigenvalue.
fn left_outliers(ens: &Ensemble) -> Vec<usize> {
    let d = ens.strengths();
    let mut left: Vec<usize> = ens.outliers.indices.iter().copied().filter(|&i| d[i] < 0.0).collect();
    left.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    left
}

fn values_for(ens: &Ensemble, run: &RunSettings, trial: usize, count: usize, full: bool) -> Result<Vec<f64>> {
    let draw = ens.draw(run.seed, trial as u64);
    if full {
        spectral::eigenvalues(draw.matrix(ens.spiked()).as_ref())
    } else {
        Ok(top(&draw, ens.spiked(), count, false, run.solver)?.values)
    }
}

/// Per-trial samples grouped by `(statistic, index)`.
pub(crate) fn collect(rows: &[TableRow], statistic: &str, index: usize) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.statistic == statistic && r.index == index)
        .map(|r| r.value)
        .collect()
}

pub fn outlier_locations(ens: &Ensemble, p: &OutlierLocationParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "outlier_locations";
    p.probe.validate("checks.outlier_locations.probe")?;
    p.edge_probe.validate("checks.outlier_locations.edge_probe")?;
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let phi = a.phi;
    let o = &ens.outliers;
    if o.s_minus > 0 && (phi - 1.0).abs() < run.tau {
        return Err(Error::config(
            "ensemble.spikes",
            format!("left outliers need |phi - 1| >= tau = {}", run.tau),
        ));
    }
    let d = ens.strengths();
    let k = a.k;
    let kf = k as f64;
    let left = left_outliers(ens);
    let full = !left.is_empty();
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let mu = values_for(ens, &run, t, o.s_plus + 1, full)?;
        let mut rows = Vec::new();
        for j in 0..o.s_plus {
            let scale = fluctuation_scale(d[j], phi)? * kf.powf(-0.5);
            rows.push(row(NAME, t, j + 1, "outlier_ratio", (mu[j] - classical_location(d[j], phi)?).abs() / scale));
        }
        for (pos, &i) in left.iter().enumerate() {
            let scale = fluctuation_scale(d[i], phi)? * kf.powf(-0.5);
            rows.push(row(NAME, t, i + 1, "outlier_ratio", (mu[k - 1 - pos] - classical_location(d[i], phi)?).abs() / scale));
        }
        if p.edge && o.s_plus < mu.len() {
            rows.push(row(NAME, t, o.s_plus + 1, "edge_ratio", (mu[o.s_plus] - a.gamma_plus).abs() * kf.powf(2.0 / 3.0)));
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mut criteria = Vec::new();
    let mut spikes: Vec<usize> = (0..o.s_plus).collect();
    spikes.extend(left.iter().copied());
    for i in spikes {
        let (q, b) = domination_quantile(&collect(&rows, "outlier_ratio", i + 1), &p.probe, k)?;
        criteria.push(Criterion::at_most(format!("outlier_{}", i + 1), q, b));
    }
    if p.edge {
        let (q, b) = domination_quantile(&collect(&rows, "edge_ratio", o.s_plus + 1), &p.edge_probe, k)?;
        criteria.push(Criterion::at_most("right_edge", q, b));
    }
    let mut report = CheckReport::new(NAME, &run, criteria).with_rows(rows);
    if o.indices.is_empty() {
        report = report.note("no outliers: only the edge statement applies");
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutlierScalingParams {
    /// Sample sizes `N` (small, large); `M` follows the configured aspect ratio.
    pub sizes: [usize; 2],
    /// 1-based rank of the spike whose outlier is tracked.
    pub spike: usize,
    /// Accepted range for `median error(small) / median error(large)`.
    pub band: [f64; 2],
    pub trials: Option<usize>,
}

impl Default for OutlierScalingParams {
    fn default() -> Self {
        Self {
            sizes: [500, 2000],
            spike: 1,
            band: [1.6, 2.5],
            trials: None,
        }
    }
}

pub fn outlier_scaling(ens: &Ensemble, p: &OutlierScalingParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "outlier_scaling";
    let run = run.with_trials(p.trials);
    let phi = ens.aspect.phi;
    if p.sizes[0] >= p.sizes[1] || p.sizes[0] < 2 {
        return Err(Error::config("checks.outlier_scaling.sizes", "need 2 <= small < large"));
    }
    if !(p.band[0] < p.band[1]) {
        return Err(Error::config("checks.outlier_scaling.band", "need lower < upper"));
    }
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for n in p.sizes {
        let m = ((phi * n as f64).round() as usize).max(1);
        let sized = ens.config.resized(m, n).build()?;
        let rank = p.spike;
        if rank == 0 || rank > sized.outliers.s_plus {
            return Err(Error::config(
                "checks.outlier_scaling.spike",
                format!("spike {rank} is not a right outlier at N = {n}"),
            ));
        }
        let d = sized.strengths()[rank - 1];
        let theta = classical_location(d, phi)?;
        let errs = map_trials(run.trials, run.execution, |t| {
            let mu = values_for(&sized, &run, t, rank, false)?;
            Ok((mu[rank - 1] - theta).abs())
        })?;
        rows.extend(
            errs.iter()
                .enumerate()
                .map(|(t, &e)| row(NAME, t, n, "abs_error", e)),
        );
        medians.push(stats::median(&errs)?);
    }
    let ratio = medians[0] / medians[1];
    let report = CheckReport::new(NAME, &run, vec![Criterion::within("median_ratio", ratio, p.band[0], p.band[1])])
        .with_rows(rows)
        .note(format!(
            "median |mu - theta| = {:.6e} at N = {}, {:.6e} at N = {}",
            medians[0], p.sizes[0], medians[1], p.sizes[1]
        ));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StickingParams {
    /// For `|mu_{i + s+} - lambda_i| K alpha_+` (and its left analogue).
    pub probe: DominationProbe,
    pub right: bool,
    /// Requires `|phi - 1| >= tau`.
    pub left: bool,
    /// Caps the right-edge index range `[1, (1 - tau) K]`.
    pub max_index: Option<usize>,
    pub trials: Option<usize>,
}

impl Default for StickingParams {
    fn default() -> Self {
        Self {
            probe: DominationProbe::with_constant(10.0),
            right: true,
            left: false,
            max_index: None,
            trials: None,
        }
    }
}

pub fn sticking(ens: &Ensemble, p: &StickingParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "sticking";
    p.probe.validate("checks.sticking.probe")?;
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let k = a.k;
    let kf = k as f64;
    let o = &ens.outliers;
    if p.left && (a.phi - 1.0).abs() < run.tau {
        return Err(Error::config(
            "checks.sticking.left",
            format!("left-edge sticking needs |phi - 1| >= tau = {}", run.tau),
        ));
    }
    let mut imax = ((1.0 - run.tau) * kf).floor() as usize;
    if let Some(cap) = p.max_index {
        imax = imax.min(cap);
    }
    imax = imax.min(a.m.saturating_sub(o.s_plus));
    let left_lo = ((run.tau * kf).ceil() as usize).max(o.s_minus + 1);
    let full = p.left || run.solver == Solver::Dense || 4 * (imax + o.s_plus) >= a.m;
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let (mu, lambda) = if full {
            (
                spectral::eigenvalues(draw.matrix(ens.spiked()).as_ref())?,
                spectral::eigenvalues(draw.matrix(ens.reference()).as_ref())?,
            )
        } else {
            (
                top(&draw, ens.spiked(), imax + o.s_plus, false, run.solver)?.values,
                top(&draw, ens.reference(), imax, false, run.solver)?.values,
            )
        };
        let mut right = Vec::new();
        let mut left = Vec::new();
        if p.right {
            for i in 1..=imax {
                right.push((mu[i + o.s_plus - 1] - lambda[i - 1]).abs() * kf * o.alpha_plus);
            }
        }
        if p.left {
            for i in left_lo..=k {
                left.push((mu[i - o.s_minus - 1] - lambda[i - 1]).abs() * kf * o.alpha_minus);
            }
        }
        Ok((right, left))
    })?;
    let mut rows = Vec::new();
    let mut all_right = Vec::new();
    let mut all_left = Vec::new();
    for (t, (r, l)) in per_trial.into_iter().enumerate() {
        if let Some(mx) = r.iter().copied().reduce(f64::max) {
            rows.push(row(NAME, t, 0, "max_right_ratio", mx));
        }
        if let Some(mx) = l.iter().copied().reduce(f64::max) {
            rows.push(row(NAME, t, 0, "max_left_ratio", mx));
        }
        all_right.extend(r);
        all_left.extend(l);
    }
    let mut criteria = Vec::new();
    if p.right && !all_right.is_empty() {
        let (q, b) = domination_quantile(&all_right, &p.probe, k)?;
        criteria.push(Criterion::at_most("right", q, b));
    }
    if p.left && !all_left.is_empty() {
        let (q, b) = domination_quantile(&all_left, &p.probe, k)?;
        criteria.push(Criterion::at_most("left", q, b));
    }
    Ok(CheckReport::new(NAME, &run, criteria)
        .with_rows(rows)
        .note(format!("right indices 1..={imax}, alpha_+ = {}", o.alpha_plus)))
}
