//! Non-outlier eigenvectors and eigenvalues: delocalization, the chi-squared
//! law, rigidity, QUE, level repulsion and universality.

use serde::{Deserialize, Serialize};

use super::outliers::collect;
use super::{chi2_criteria, domination_quantile, row, top, CheckReport, Criterion, DominationProbe, RunSettings, TableRow};
use crate::ensemble::{resolve_directions, DirectionSpec, Ensemble, EntryLaw, SpikeSpec};
use crate::exec::map_trials;
use crate::laws::{classical_eigenvalue_locations, edge_distance, eigenvalue_spacing, sigma_of};
use crate::spectral::{self, linalg};
use crate::{stats, Error, Result};

fn directions(specs: &[DirectionSpec], ens: &Ensemble, path: &str) -> Result<Vec<Vec<f64>>> {
    resolve_directions(specs, ens.aspect.m, Some(&ens.population.spec)).map_err(|e| match e {
        Error::Config { path: sub, message } => Error::config(format!("{path}.{sub}"), message),
        other => other,
    })
}

/// Eigenvectors of the spiked matrix at the given 1-based indices.
fn eigenvectors_at(ens: &Ensemble, run: &RunSettings, trial: usize, indices: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let draw = ens.draw(run.seed, trial as u64);
    let count = indices.iter().copied().max().unwrap_or(0);
    let t = top(&draw, ens.spiked(), count, true, run.solver)?;
    Ok((
        indices.iter().map(|&a| t.values[a - 1]).collect(),
        indices.iter().map(|&a| t.vectors[a - 1].clone()).collect(),
    ))
}

/// `|w|^2 / M + sum_i sigma_i w_i^2 / (M ((d_i - edge)^2 + kappa))`, with
/// `edge = 1` for the right form and `-1` for the left.
pub fn delocalization_scale(spec: &SpikeSpec, phi: f64, w: &[f64], kappa: f64, edge: f64) -> f64 {
    let m = w.len() as f64;
    let (comps, _) = spec.components(w);
    let spikes: f64 = spec
        .strengths()
        .iter()
        .zip(&comps)
        .map(|(&d, &wi)| sigma_of(d, phi) * wi * wi / (m * ((d - edge).powi(2) + kappa)))
        .sum();
    linalg::dot(w, w) / m + spikes
}

/// `sum_i sigma_i w_i^2 / (M (d_i - 1)^2)` over all `M` directions, the
/// unspiked ones entering with `d = 0`.
pub fn nonoutlier_scale(spec: &SpikeSpec, phi: f64, w: &[f64]) -> f64 {
    let m = w.len() as f64;
    let (comps, rest) = spec.components(w);
    let spikes: f64 = spec
        .strengths()
        .iter()
        .zip(&comps)
        .map(|(&d, &wi)| sigma_of(d, phi) * wi * wi / (m * (d - 1.0).powi(2)))
        .sum();
    spikes + rest / m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelocalizationParams {
    /// 1-based indices for the right-edge form.
    pub indices: Vec<usize>,
    /// 1-based indices for the left-edge form; needs `|phi - 1| >= tau`.
    pub left_indices: Vec<usize>,
    pub directions: Vec<DirectionSpec>,
    pub probe: DominationProbe,
    pub trials: Option<usize>,
}

impl Default for DelocalizationParams {
    fn default() -> Self {
        Self {
            indices: vec![1, 2, 5],
            left_indices: Vec::new(),
            directions: vec![DirectionSpec::Random { seed: 7 }, DirectionSpec::Coordinate(0)],
            probe: DominationProbe::with_constant(10.0),
            trials: None,
        }
    }
}

pub fn nonoutlier_delocalization(ens: &Ensemble, p: &DelocalizationParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "nonoutlier_delocalization";
    const PATH: &str = "checks.nonoutlier_delocalization";
    p.probe.validate(&format!("{PATH}.probe"))?;
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let k = a.k;
    let o = &ens.outliers;
    let right_max = ((1.0 - run.tau) * k as f64).floor() as usize;
    for (n, &i) in p.indices.iter().enumerate() {
        if i == 0 || i > right_max {
            return Err(Error::config(format!("{PATH}.indices[{n}]"), format!("{i} outside [1, (1 - tau) K = {right_max}]")));
        }
        if i <= o.s_plus {
            return Err(Error::config(format!("{PATH}.indices[{n}]"), format!("{i} is an outlier index")));
        }
    }
    if !p.left_indices.is_empty() && (a.phi - 1.0).abs() < run.tau {
        return Err(Error::config(
            format!("{PATH}.left_indices"),
            format!("left-edge form needs |phi - 1| >= tau = {}", run.tau),
        ));
    }
    let left_min = (run.tau * k as f64).ceil() as usize;
    for (n, &i) in p.left_indices.iter().enumerate() {
        if i < left_min.max(1) || i > k {
            return Err(Error::config(format!("{PATH}.left_indices[{n}]"), format!("{i} outside [tau K, K]")));
        }
        if i + o.s_minus > k {
            return Err(Error::config(format!("{PATH}.left_indices[{n}]"), format!("{i} is an outlier index")));
        }
    }
    let dirs = directions(&p.directions, ens, PATH)?;
    let spec = &ens.population.spec;
    let mut scales = Vec::new();
    for &i in &p.indices {
        let kappa = edge_distance(i, k)?;
        scales.push(dirs.iter().map(|w| delocalization_scale(spec, a.phi, w, kappa, 1.0)).collect::<Vec<_>>());
    }
    for &i in &p.left_indices {
        let kappa = edge_distance(i, k)?;
        scales.push(dirs.iter().map(|w| delocalization_scale(spec, a.phi, w, kappa, -1.0)).collect::<Vec<_>>());
    }
    let all: Vec<usize> = p.indices.iter().chain(&p.left_indices).copied().collect();
    let full = !p.left_indices.is_empty();
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let vecs = if full {
            let e = spectral::decompose(ens.draw(run.seed, t as u64).matrix(ens.spiked()).as_ref())?;
            all.iter().map(|&i| e.vector(i - 1)).collect()
        } else {
            eigenvectors_at(ens, &run, t, &all)?.1
        };
        let mut rows = Vec::new();
        for (n, xi) in vecs.iter().enumerate() {
            for (j, w) in dirs.iter().enumerate() {
                let c = linalg::dot(w, xi);
                rows.push(row(NAME, t, n * dirs.len() + j, "ratio", c * c / scales[n][j]));
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mut criteria = Vec::new();
    for (n, &i) in all.iter().enumerate() {
        let side = if n < p.indices.len() { "right" } else { "left" };
        for j in 0..dirs.len() {
            let (q, b) = domination_quantile(&collect(&rows, "ratio", n * dirs.len() + j), &p.probe, k)?;
            criteria.push(Criterion::at_most(format!("{side}_{i}_direction_{j}"), q, b));
        }
    }
    Ok(CheckReport::new(NAME, &run, criteria)
        .with_rows(rows)
        .note("row index = position in (indices, left_indices) times #directions + direction"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonoutlierLawParams {
    /// 1-based eigenvector index `a`.
    pub index: usize,
    pub direction: DirectionSpec,
    pub ks_threshold: f64,
    pub se_multiple: f64,
    /// Accepted range for the median of the normalized overlap.
    pub median_band: [f64; 2],
    pub trials: Option<usize>,
}

impl Default for NonoutlierLawParams {
    fn default() -> Self {
        Self {
            index: 3,
            direction: DirectionSpec::Spike(1),
            ks_threshold: 0.05,
            se_multiple: 3.0,
            median_band: [0.3, 1.2],
            trials: None,
        }
    }
}

pub fn nonoutlier_law(ens: &Ensemble, p: &NonoutlierLawParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "nonoutlier_law";
    const PATH: &str = "checks.nonoutlier_law";
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let o = &ens.outliers;
    if p.index == 0 || p.index > a.k || p.index <= o.s_plus {
        return Err(Error::config(format!("{PATH}.index"), format!("{} is not a non-outlier index", p.index)));
    }
    let w = directions(std::slice::from_ref(&p.direction), ens, PATH)?.remove(0);
    let scale = nonoutlier_scale(&ens.population.spec, a.phi, &w);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config(format!("{PATH}.direction"), format!("normalization {scale} is not positive and finite")));
    }
    let samples = map_trials(run.trials, run.execution, |t| {
        let (_, v) = eigenvectors_at(ens, &run, t, &[p.index])?;
        let c = linalg::dot(&w, &v[0]);
        Ok(c * c / scale)
    })?;
    let rows = samples.iter().enumerate().map(|(t, &x)| row(NAME, t, p.index, "theta_hat", x)).collect();
    let mut criteria = chi2_criteria("", &samples, p.ks_threshold, p.se_multiple)?;
    criteria.push(Criterion::within("median", stats::median(&samples)?, p.median_band[0], p.median_band[1]));
    let admissible = (a.k as f64).powf(1.0 - run.tau) * o.alpha_plus.powi(3);
    let mut report = CheckReport::new(NAME, &run, criteria).with_rows(rows);
    report = report.note(format!(
        "admissible range a <= K^(1 - tau) alpha_+^3 = {admissible:.4}; requested a = {}",
        p.index
    ));
    if (p.index as f64) > admissible {
        report = report.note("requested index lies outside the admissible range; the law is tested regardless");
    }
    Ok(report)
}

fn require_null(ens: &Ensemble, path: &str) -> Result<()> {
    if ens.population.spec.is_empty() {
        Ok(())
    } else {
        Err(Error::config(path, "this check needs Sigma = I (no spikes)"))
    }
}

fn index_gate(a: usize, k: usize, tau: f64, path: &str) -> Result<()> {
    let max = (k as f64).powf(1.0 - tau);
    if a == 0 || a as f64 > max {
        return Err(Error::config(path, format!("index {a} outside [1, K^(1 - tau) = {max:.2}]")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigidityQueParams {
    /// 1-based indices for the rigidity statistic.
    pub rigidity_indices: Vec<usize>,
    pub probe: DominationProbe,
    pub que_index: usize,
    pub que_direction: DirectionSpec,
    pub ks_threshold: f64,
    pub se_multiple: f64,
    pub trials: Option<usize>,
}

impl Default for RigidityQueParams {
    fn default() -> Self {
        Self {
            rigidity_indices: (1..=20).collect(),
            probe: DominationProbe::with_constant(10.0),
            que_index: 5,
            que_direction: DirectionSpec::Random { seed: 5 },
            ks_threshold: 0.05,
            se_multiple: 3.0,
            trials: None,
        }
    }
}

pub fn rigidity_and_que(ens: &Ensemble, p: &RigidityQueParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "rigidity_and_que";
    const PATH: &str = "checks.rigidity_and_que";
    require_null(ens, "ensemble.spikes")?;
    p.probe.validate(&format!("{PATH}.probe"))?;
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let k = a.k;
    index_gate(p.que_index, k, run.tau, &format!("{PATH}.que_index"))?;
    for (n, &i) in p.rigidity_indices.iter().enumerate() {
        if i == 0 || i > k {
            return Err(Error::config(format!("{PATH}.rigidity_indices[{n}]"), format!("{i} outside [1, K]")));
        }
    }
    let gamma = classical_eigenvalue_locations(&a, &p.rigidity_indices)?;
    let w = directions(std::slice::from_ref(&p.que_direction), ens, PATH)?.remove(0);
    let kf = k as f64;
    let count = p.rigidity_indices.iter().copied().max().unwrap_or(0).max(p.que_index);
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let tp = top(&draw, ens.spiked(), count, true, run.solver)?;
        let mut rows = Vec::new();
        for (&i, &g) in p.rigidity_indices.iter().zip(&gamma) {
            let weight = (i.min(k + 1 - i) as f64).powf(1.0 / 3.0) * kf.powf(2.0 / 3.0);
            rows.push(row(NAME, t, i, "rigidity", (tp.values[i - 1] - g).abs() * weight));
        }
        let c = linalg::dot(&w, &tp.vectors[p.que_index - 1]);
        rows.push(row(NAME, t, p.que_index, "que", a.m as f64 * c * c));
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mut criteria = Vec::new();
    let rig: Vec<f64> = rows.iter().filter(|r| r.statistic == "rigidity").map(|r| r.value).collect();
    if !rig.is_empty() {
        let (q, b) = domination_quantile(&rig, &p.probe, k)?;
        criteria.push(Criterion::at_most("rigidity", q, b));
    }
    criteria.extend(chi2_criteria("que_", &collect(&rows, "que", p.que_index), p.ks_threshold, p.se_multiple)?);
    Ok(CheckReport::new(NAME, &run, criteria).with_rows(rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelRepulsionParams {
    pub index: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub constant: f64,
    pub trials: Option<usize>,
}

impl Default for LevelRepulsionParams {
    fn default() -> Self {
        Self {
            index: 1,
            epsilon: 0.5,
            delta: 0.0,
            constant: 0.1,
            trials: None,
        }
    }
}

/// Fraction of gaps at most `threshold`.
pub fn small_gap_fraction(gaps: &[f64], threshold: f64) -> f64 {
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.iter().filter(|&&g| g <= threshold).count() as f64 / gaps.len() as f64
}

pub fn level_repulsion(ens: &Ensemble, p: &LevelRepulsionParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "level_repulsion";
    const PATH: &str = "checks.level_repulsion";
    let run = run.with_trials(p.trials);
    let k = ens.aspect.k;
    index_gate(p.index, k, run.tau, &format!("{PATH}.index"))?;
    let spacing = eigenvalue_spacing(p.index, k).map_err(|e| Error::config(format!("{PATH}.index"), e.to_string()))?;
    if !(p.constant > 0.0) || !(p.epsilon >= 0.0) || !(p.delta >= 0.0) {
        return Err(Error::config(PATH, "need epsilon >= 0, delta >= 0, constant > 0"));
    }
    let kf = k as f64;
    let threshold = spacing * kf.powf(-p.epsilon);
    let gaps = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let v = top(&draw, ens.reference(), p.index + 1, false, run.solver)?.values;
        Ok(v[p.index - 1] - v[p.index])
    })?;
    let rows = gaps.iter().enumerate().map(|(t, &g)| row(NAME, t, p.index, "gap", g)).collect();
    let frac = small_gap_fraction(&gaps, threshold);
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let criteria = vec![
        Criterion::at_most("small_gap_fraction", frac, kf.powf(-p.delta) * p.constant),
        Criterion::at_least("positive_gaps", if min_gap > 0.0 { 1.0 } else { 0.0 }, 1.0),
    ];
    Ok(CheckReport::new(NAME, &run, criteria)
        .with_rows(rows)
        .note(format!("gap threshold Delta_a K^(-epsilon) = {threshold:.6e}, smallest gap {min_gap:.6e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniversalityParams {
    pub other_law: EntryLaw,
    /// Master seed of the second ensemble is `seed + seed_offset`.
    pub seed_offset: u64,
    /// 1-based indices for `(lambda_a - gamma_a) / Delta_a`.
    pub indices: Vec<usize>,
    /// 1-based index for `M <w, zeta_a>^2`.
    pub vector_index: usize,
    pub direction: DirectionSpec,
    pub ks_threshold: f64,
    pub trials: Option<usize>,
}

impl Default for UniversalityParams {
    fn default() -> Self {
        Self {
            other_law: EntryLaw::Rademacher,
            seed_offset: 1,
            indices: vec![1],
            vector_index: 3,
            direction: DirectionSpec::Random { seed: 5 },
            ks_threshold: 0.1,
            trials: None,
        }
    }
}

pub fn universality_pair(ens: &Ensemble, p: &UniversalityParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "universality_pair";
    const PATH: &str = "checks.universality_pair";
    require_null(ens, "ensemble.spikes")?;
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let k = a.k;
    for (n, &i) in p.indices.iter().enumerate() {
        eigenvalue_spacing(i, k).map_err(|e| Error::config(format!("{PATH}.indices[{n}]"), e.to_string()))?;
    }
    if p.vector_index == 0 || p.vector_index > k {
        return Err(Error::config(format!("{PATH}.vector_index"), "outside [1, K]"));
    }
    let other = ens.config.clone().with_law(p.other_law).build()?;
    let gamma = classical_eigenvalue_locations(&a, &p.indices)?;
    let w = directions(std::slice::from_ref(&p.direction), ens, PATH)?.remove(0);
    let count = p.indices.iter().copied().max().unwrap_or(0).max(p.vector_index);
    let sample = |e: &Ensemble, seed: u64| {
        map_trials(run.trials, run.execution, |t| {
            let draw = e.draw(seed, t as u64);
            let tp = top(&draw, e.spiked(), count, true, run.solver)?;
            let mut out = Vec::new();
            for (&i, &g) in p.indices.iter().zip(&gamma) {
                out.push((tp.values[i - 1] - g) / eigenvalue_spacing(i, k)?);
            }
            let c = linalg::dot(&w, &tp.vectors[p.vector_index - 1]);
            out.push(a.m as f64 * c * c);
            Ok(out)
        })
    };
    let first = sample(ens, run.seed)?;
    let second = sample(&other, run.seed.wrapping_add(p.seed_offset))?;
    let mut rows = Vec::new();
    for (tag, set) in [("first", &first), ("second", &second)] {
        for (t, vals) in set.iter().enumerate() {
            for (n, &i) in p.indices.iter().enumerate() {
                rows.push(row(NAME, t, i, &format!("{tag}_eigenvalue"), vals[n]));
            }
            rows.push(row(NAME, t, p.vector_index, &format!("{tag}_overlap"), vals[p.indices.len()]));
        }
    }
    let column = |set: &[Vec<f64>], n: usize| set.iter().map(|v| v[n]).collect::<Vec<_>>();
    let mut criteria = Vec::new();
    for (n, &i) in p.indices.iter().enumerate() {
        let ks = stats::ks_two_sample(&column(&first, n), &column(&second, n))?;
        criteria.push(Criterion::at_most(format!("eigenvalue_{i}_ks"), ks, p.ks_threshold));
    }
    let n = p.indices.len();
    let ks = stats::ks_two_sample(&column(&first, n), &column(&second, n))?;
    criteria.push(Criterion::at_most(format!("overlap_{}_ks", p.vector_index), ks, p.ks_threshold));
    Ok(CheckReport::new(NAME, &run, criteria).with_rows(rows).note(format!(
        "{:?} entries against {:?} entries",
        ens.config.law, p.other_law
    )))
}
