//! Deterministic identities checked on random draws: the master equation,
//! the resolvent perturbation formulas, and interlacing.

use serde::{Deserialize, Serialize};

use super::{row, CheckReport, Criterion, RunSettings, TableRow};
use crate::ensemble::{resolve_directions, DirectionSpec, Ensemble};
use crate::exec::map_trials;
use crate::laws::SpectralPoint;
use crate::spectral::resolvent::shifted_solve;
use crate::spectral::{
    self, identity_check_pert2, interlacing_general, interlacing_rank_one, linalg, master_equation_roots, match_roots,
    projected_resolvent_form, SpikeResolvent,
};
use crate::{Complex64, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearAlgebraParams {
    pub points: Vec<SpectralPoint>,
    pub directions: Vec<DirectionSpec>,
    /// Bound on the perturbation-formula residuals.
    pub residual_tolerance: f64,
    /// Bound on `|root - mu| / max(1, |mu|)`.
    pub root_tolerance: f64,
    pub trials: Option<usize>,
}

impl Default for LinearAlgebraParams {
    fn default() -> Self {
        Self {
            points: vec![
                SpectralPoint { e: 0.5, eta: 0.5 },
                SpectralPoint { e: 2.0, eta: 0.1 },
                SpectralPoint { e: 5.0, eta: 1.0 },
            ],
            directions: vec![DirectionSpec::Random { seed: 31 }, DirectionSpec::Random { seed: 32 }],
            residual_tolerance: 1e-9,
            root_tolerance: 1e-6,
            trials: None,
        }
    }
}

pub fn linear_algebra(ens: &Ensemble, p: &LinearAlgebraParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "linear_algebra";
    const PATH: &str = "checks.linear_algebra";
    let run = run.with_trials(p.trials);
    for (i, z) in p.points.iter().enumerate() {
        if !(z.eta > 0.0) {
            return Err(Error::config(format!("{PATH}.points[{i}].eta"), "must be positive"));
        }
    }
    let a = ens.aspect;
    let pop = &ens.population;
    let d = ens.strengths();
    let dirs = resolve_directions(&p.directions, a.m, Some(&pop.spec))
        .map_err(|e| Error::config(format!("{PATH}.directions"), e.to_string()))?;
    let vmat = pop.spike_directions().to_owned();
    let vcols: Vec<Vec<f64>> = (0..d.len()).map(|j| linalg::column(vmat.as_ref(), j)).collect();
    let sigma_max = (0..d.len()).map(|i| pop.spec.sigma(i)).fold(1.0, f64::max);
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let q = draw.matrix(ens.spiked());
        let h = draw.matrix(ens.reference());
        let mut rows = Vec::new();
        let mut pert2 = 0.0_f64;
        for z in &p.points {
            for v in &dirs {
                for w in &dirs {
                    pert2 = pert2.max(identity_check_pert2(q.as_ref(), h.as_ref(), pop, z.z(), v, w)?);
                }
            }
        }
        rows.push(row(NAME, t, 0, "pert2_residual", pert2));
        if d.is_empty() {
            return Ok(rows);
        }
        let he = spectral::decompose(h.as_ref())?;
        let sr = SpikeResolvent::new(&he, vmat.as_ref(), a.phi)?;
        let mut projected = 0.0_f64;
        let k = d.len();
        for z in &p.points {
            let form = projected_resolvent_form(&sr, &d, z.z())?;
            let rhs: Vec<&[f64]> = vcols.iter().map(|c| c.as_slice()).collect();
            let x = shifted_solve(q.as_ref(), z.z(), &rhs)?;
            for a_ in 0..k {
                for b in 0..k {
                    let direct: Complex64 = vcols[a_].iter().zip(&x[b]).map(|(u, y)| y * *u).sum();
                    let diff = (direct - form[a_ * k + b]).norm() / direct.norm().max(1.0);
                    projected = projected.max(diff);
                }
            }
        }
        rows.push(row(NAME, t, 0, "projected_resolvent_residual", projected));
        let mu = spectral::eigenvalues(q.as_ref())?;
        let l1 = he.values[0];
        let lo = l1 + 1e-9 * l1.abs().max(1.0);
        let hi = sigma_max * l1 * (1.0 + 1e-6) + 1.0;
        let roots = master_equation_roots(&sr, &d, (lo, hi))?;
        let expected = mu.iter().filter(|&&m| m > lo).count();
        let found: usize = roots.iter().map(|r| r.multiplicity).sum();
        rows.push(row(NAME, t, 0, "root_count_mismatch", (found as f64 - expected as f64).abs()));
        let worst = match_roots(&roots, &mu)
            .iter()
            .map(|m| m.distance / m.eigenvalue.abs().max(1.0))
            .fold(0.0, f64::max);
        rows.push(row(NAME, t, 0, "root_distance", worst));
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let max_of = |stat: &str| rows.iter().filter(|r| r.statistic == stat).map(|r| r.value).fold(0.0, f64::max);
    let mut criteria = vec![Criterion::at_most("pert2", max_of("pert2_residual"), p.residual_tolerance)];
    if !d.is_empty() {
        criteria.push(Criterion::at_most("projected_resolvent", max_of("projected_resolvent_residual"), p.residual_tolerance));
        criteria.push(Criterion::at_most("root_count", max_of("root_count_mismatch"), 0.0));
        criteria.push(Criterion::at_most("roots", max_of("root_distance"), p.root_tolerance));
    }
    Ok(CheckReport::new(NAME, &run, criteria).with_rows(rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterlacingParams {
    /// Slack is `relative_slack * max(1, ||Q||)`.
    pub relative_slack: f64,
    /// Also test the bound `mu_i in [lambda_{i + r'}, lambda_{i - r'}]`.
    pub general: bool,
    pub trials: Option<usize>,
}

impl Default for InterlacingParams {
    fn default() -> Self {
        Self {
            relative_slack: 1e-10,
            general: true,
            trials: None,
        }
    }
}

pub fn interlacing(ens: &Ensemble, p: &InterlacingParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "interlacing";
    let run = run.with_trials(p.trials);
    let d = ens.strengths();
    let rank_one = d.len() == 1;
    let r_prime = d.len() + ens.population.r();
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let mu = spectral::eigenvalues(draw.matrix(ens.spiked()).as_ref())?;
        let lambda = spectral::eigenvalues(draw.matrix(ens.reference()).as_ref())?;
        let slack = p.relative_slack * mu[0].abs().max(lambda[0].abs()).max(1.0);
        let mut rows = Vec::new();
        if rank_one {
            let rep = interlacing_rank_one(&mu, &lambda, d[0] > 0.0, slack);
            rows.push(row(NAME, t, rep.violation.unwrap_or(0), "chain_violation", if rep.holds { 0.0 } else { 1.0 }));
        }
        if p.general {
            let rep = interlacing_general(&mu, &lambda, r_prime, slack);
            rows.push(row(NAME, t, rep.violation.unwrap_or(0), "general_violation", if rep.holds { 0.0 } else { 1.0 }));
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let count = |stat: &str| rows.iter().filter(|r| r.statistic == stat).map(|r| r.value).sum::<f64>();
    let mut criteria = Vec::new();
    if rank_one {
        criteria.push(Criterion::at_most("rank_one_chain_violations", count("chain_violation"), 0.0));
    }
    if p.general {
        criteria.push(Criterion::at_most("general_violations", count("general_violation"), 0.0));
    }
    let mut report = CheckReport::new(NAME, &run, criteria).with_rows(rows);
    if !rank_one {
        report = report.note(format!("{} spikes: rank-one chain not applicable", d.len()));
    }
    Ok(report.note(format!("general bound uses r' = {r_prime}")))
}
