//! Outlier eigenvectors: cone concentration near and far from the bulk,
//! the degenerate case, and delocalization in orthogonal spike directions.

use serde::{Deserialize, Serialize};

use super::{domination_quantile, row, top, CheckReport, Criterion, DominationProbe, RunSettings, TableRow};
use super::outliers::collect;
use crate::ensemble::{resolve_directions, DirectionSpec, Ensemble, SpikeSpec};
use crate::exec::map_trials;
use crate::laws::{cone_mass, sigma_of};
use crate::spectral::linalg;
use crate::{stats, Error, Result};

/// Leading term `<w, Z_A w>` and the pieces of the error expressions for one
/// direction. Unspiked directions enter with `d = 0`, `sigma = 1` and weight
/// `|w|^2 - sum_i w_i^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeTerms {
    pub leading: f64,
    /// `sum_{i in A} w_i^2 / (M^{1/2} (d_i - 1)^{1/2})`
    pub edge_term: f64,
    /// `sum_{i in A} sigma_i w_i^2`
    pub mass_in: f64,
    /// `sum_{i in A} sigma_i w_i^2 / (M nu_i^2)`
    pub spread_in: f64,
    /// `sum_{i not in A} sigma_i w_i^2 / (M nu_i^2)`
    pub spread_out: f64,
    /// `min_{i in A} d_i`
    pub d_a: f64,
}

impl ConeTerms {
    /// `set` holds 0-based positions in the sorted spike list.
    pub fn new(spec: &SpikeSpec, phi: f64, m: usize, set: &[usize], w: &[f64]) -> Result<Self> {
        let d = spec.strengths();
        let (comps, rest) = spec.components(w);
        let mf = m as f64;
        let unspiked = spec.len() < m;
        let in_a = |i: usize| set.contains(&i);
        let mut t = ConeTerms {
            leading: 0.0,
            edge_term: 0.0,
            mass_in: 0.0,
            spread_in: 0.0,
            spread_out: 0.0,
            d_a: set.iter().map(|&i| d[i]).fold(f64::INFINITY, f64::min),
        };
        let add = |acc: &mut f64, sigma: f64, w2: f64, nu: f64| {
            if w2 > 0.0 {
                *acc += sigma * w2 / (mf * nu * nu);
            }
        };
        for (i, (&di, &wi)) in d.iter().zip(&comps).enumerate() {
            let w2 = wi * wi;
            let sigma = sigma_of(di, phi);
            if in_a(i) {
                t.leading += cone_mass(di, phi)? * w2;
                t.edge_term += w2 / (mf.sqrt() * (di - 1.0).sqrt());
                t.mass_in += sigma * w2;
                let mut nu = if unspiked { di.abs() } else { f64::INFINITY };
                for (j, &dj) in d.iter().enumerate() {
                    if !in_a(j) {
                        nu = nu.min((di - dj).abs());
                    }
                }
                add(&mut t.spread_in, sigma, w2, nu);
            } else {
                let nu = set.iter().map(|&j| (di - d[j]).abs()).fold(f64::INFINITY, f64::min);
                add(&mut t.spread_out, sigma, w2, nu);
            }
        }
        if unspiked {
            let nu = set.iter().map(|&j| d[j].abs()).fold(f64::INFINITY, f64::min);
            add(&mut t.spread_out, 1.0, rest, nu);
        }
        Ok(t)
    }

    /// Error scale for outliers near the bulk.
    pub fn near_error(&self) -> f64 {
        self.edge_term + self.spread_in + self.spread_out + self.leading.sqrt() * self.spread_out.sqrt()
    }

    /// Error scale for outliers far from the bulk, with `d_A = min_{i in A} d_i`.
    pub fn far_error(&self, phi: f64, m: usize) -> f64 {
        let s = phi.sqrt();
        let da = self.d_a;
        self.mass_in / ((m as f64).sqrt() * (s + da))
            + (1.0 + s * da * da / (s + da)) * (self.spread_in + self.spread_out)
            + da / (s + da) * self.mass_in.sqrt() * self.spread_out.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrthogonalParams {
    /// 1-based rank of the spike `j` whose direction is probed.
    pub spike: usize,
    /// For `M <v_j, xi_i>^2 (d_i - d_j)^2 / sigma_j`.
    pub probe: DominationProbe,
}

impl Default for OrthogonalParams {
    fn default() -> Self {
        Self {
            spike: 2,
            probe: DominationProbe::with_constant(10.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConeParams {
    /// 1-based spike ranks forming `A`.
    pub set: Vec<usize>,
    pub directions: Vec<DirectionSpec>,
    /// For `|<w, P_A w> - <w, Z_A w>|` over the error expression.
    pub probe: DominationProbe,
    /// If set, the median of `|<w, P_A w> - <w, Z_A w>|` must not exceed it.
    pub median_tolerance: Option<f64>,
    pub orthogonal: Option<OrthogonalParams>,
    pub trials: Option<usize>,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self {
            set: vec![1],
            directions: vec![DirectionSpec::Spike(1)],
            probe: DominationProbe::with_constant(10.0),
            median_tolerance: None,
            orthogonal: None,
            trials: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Regime {
    Near,
    Far,
}

pub fn cone_near(ens: &Ensemble, p: &ConeParams, run: &RunSettings) -> Result<CheckReport> {
    cone(ens, p, run, Regime::Near)
}

pub fn cone_far(ens: &Ensemble, p: &ConeParams, run: &RunSettings) -> Result<CheckReport> {
    cone(ens, p, run, Regime::Far)
}

fn validate_set(ens: &Ensemble, p: &ConeParams, regime: Regime, tau: f64, path: &str) -> Result<Vec<usize>> {
    let d = ens.strengths();
    let k = ens.aspect.k as f64;
    let mut set = Vec::with_capacity(p.set.len());
    for (n, &rank) in p.set.iter().enumerate() {
        let here = format!("{path}.set[{n}]");
        if rank == 0 || rank > ens.outliers.s_plus {
            return Err(Error::config(here, format!("spike {rank} is not a right outlier")));
        }
        let di = d[rank - 1];
        match regime {
            Regime::Near => {
                if di < 1.0 + k.powf(-1.0 / 3.0) || di > 1.0 / tau {
                    return Err(Error::config(here, format!("d = {di} outside [1 + K^(-1/3), 1/tau]")));
                }
            }
            Regime::Far => {
                if di < 1.0 + tau {
                    return Err(Error::config(here, format!("d = {di} below 1 + tau")));
                }
            }
        }
        if set.contains(&(rank - 1)) {
            return Err(Error::config(here, "duplicate index"));
        }
        set.push(rank - 1);
    }
    if regime == Regime::Far && !set.is_empty() {
        let lo = set.iter().map(|&i| d[i]).fold(f64::INFINITY, f64::min);
        let hi = set.iter().map(|&i| d[i]).fold(0.0, f64::max);
        if hi > lo / tau {
            return Err(Error::config(format!("{path}.set"), "strengths in A are not comparable within 1/tau"));
        }
    }
    Ok(set)
}

fn cone(ens: &Ensemble, p: &ConeParams, run: &RunSettings, regime: Regime) -> Result<CheckReport> {
    let name = match regime {
        Regime::Near => "cone_near",
        Regime::Far => "cone_far",
    };
    let path = format!("checks.{name}");
    p.probe.validate(&format!("{path}.probe"))?;
    let run = run.with_trials(p.trials);
    if ens.population.spec.is_empty() || p.set.is_empty() {
        return Ok(CheckReport::new(name, &run, Vec::new()).note("no spikes in A: vacuous"));
    }
    let set = validate_set(ens, p, regime, run.tau, &path)?;
    let a = ens.aspect;
    let spec = &ens.population.spec;
    let dirs = resolve_directions(&p.directions, a.m, Some(spec)).map_err(|e| match e {
        Error::Config { path: sub, message } => Error::config(format!("{path}.{sub}"), message),
        other => other,
    })?;
    let terms: Vec<ConeTerms> = dirs
        .iter()
        .map(|w| ConeTerms::new(spec, a.phi, a.m, &set, w))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = terms
        .iter()
        .map(|t| match regime {
            Regime::Near => t.near_error(),
            Regime::Far => t.far_error(a.phi, a.m),
        })
        .collect();
    let d = ens.strengths();
    let orth = match &p.orthogonal {
        Some(o) => {
            o.probe.validate(&format!("{path}.orthogonal.probe"))?;
            if o.spike == 0 || o.spike > spec.len() || set.contains(&(o.spike - 1)) {
                return Err(Error::config(
                    format!("{path}.orthogonal.spike"),
                    format!("spike {} must exist and lie outside A", o.spike),
                ));
            }
            Some((o, o.spike - 1))
        }
        None => None,
    };
    let count = set.iter().max().map_or(0, |&i| i + 1);
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let tp = top(&draw, ens.spiked(), count, true, run.solver)?;
        let mut rows = Vec::new();
        for (n, w) in dirs.iter().enumerate() {
            let pa: f64 = set
                .iter()
                .map(|&i| {
                    let c = linalg::dot(&tp.vectors[i], w);
                    c * c
                })
                .sum();
            let dev = (pa - terms[n].leading).abs();
            rows.push(row(name, t, n, "projection", pa));
            rows.push(row(name, t, n, "abs_deviation", dev));
            rows.push(row(name, t, n, "normalized_deviation", dev / errors[n]));
        }
        if let Some((_, j)) = orth {
            let vj = &spec.spikes[j].v;
            let sigma_j = spec.sigma(j);
            for &i in &set {
                let c = linalg::dot(&tp.vectors[i], vj);
                let stat = a.m as f64 * c * c * (d[i] - d[j]).powi(2) / sigma_j;
                rows.push(row(name, t, i + 1, "orthogonal_ratio", stat));
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mut criteria = Vec::new();
    for n in 0..dirs.len() {
        let (q, b) = domination_quantile(&collect(&rows, "normalized_deviation", n), &p.probe, a.k)?;
        criteria.push(Criterion::at_most(format!("direction_{n}"), q, b));
        if let Some(tol) = p.median_tolerance {
            let med = stats::median(&collect(&rows, "abs_deviation", n))?;
            criteria.push(Criterion::at_most(format!("direction_{n}_median"), med, tol));
        }
    }
    if let Some((o, _)) = orth {
        for &i in &set {
            let (q, b) = domination_quantile(&collect(&rows, "orthogonal_ratio", i + 1), &o.probe, a.k)?;
            criteria.push(Criterion::at_most(format!("orthogonal_{}_{}", o.spike, i + 1), q, b));
        }
    }
    let mut report = CheckReport::new(name, &run, criteria).with_rows(rows);
    for (n, (t, e)) in terms.iter().zip(&errors).enumerate() {
        report = report.note(format!("direction {n}: leading {:.6e}, error scale {:.6e}", t.leading, e));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegenerateParams {
    /// Bound on the median absolute deviation of each entry of `M M^T` and
    /// `M^T M` from `u(d) I`.
    pub tolerance: f64,
    /// Directions projected onto the null space of `Pi_A` before use.
    pub null_directions: Vec<DirectionSpec>,
    /// For `<w, xi_i>^2` over its error scale `|w|^2 / (M d^2)`.
    pub probe: DominationProbe,
    pub trials: Option<usize>,
}

impl Default for DegenerateParams {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            null_directions: vec![DirectionSpec::Random { seed: 11 }],
            // The null-space mass 1 - u(d) spreads isotropically, so the ratio is
            // about (1 - u) d^2 chi^2_1: 2 chi^2_1 at d = 2, with 99% point 13.3.
            probe: DominationProbe::with_constant(20.0),
            trials: None,
        }
    }
}

/// `M_{ij} = <v_i, xi_j>` from spike directions and eigenvectors.
pub fn overlap_matrix(v: &[Vec<f64>], xi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|vi| xi.iter().map(|x| linalg::dot(vi, x)).collect()).collect()
}

/// `(M M^T, M^T M)`.
pub fn gram_pair(m: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = m.len();
    let mm = (0..s)
        .map(|i| (0..s).map(|j| (0..s).map(|k| m[i][k] * m[j][k]).sum()).collect())
        .collect();
    let mtm = (0..s)
        .map(|i| (0..s).map(|j| (0..s).map(|k| m[k][i] * m[k][j]).sum()).collect())
        .collect();
    (mm, mtm)
}

pub fn degenerate_cone(ens: &Ensemble, p: &DegenerateParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "degenerate_cone";
    const PATH: &str = "checks.degenerate_cone";
    p.probe.validate(&format!("{PATH}.probe"))?;
    let run = run.with_trials(p.trials);
    let spec = &ens.population.spec;
    if spec.is_empty() {
        return Ok(CheckReport::new(NAME, &run, Vec::new()).note("no spikes: vacuous"));
    }
    let d = spec.strengths();
    let s = d.len();
    if s < 2 || d.iter().any(|&x| (x - d[0]).abs() > 1e-12) || d[0] <= 1.0 + run.tau {
        return Err(Error::config(
            "ensemble.spikes",
            format!("degenerate check needs >= 2 equal spikes above 1 + tau, got {d:?}"),
        ));
    }
    let a = ens.aspect;
    let u = cone_mass(d[0], a.phi)?;
    let v: Vec<Vec<f64>> = spec.spikes.iter().map(|sp| sp.v.clone()).collect();
    let mut null = resolve_directions(&p.null_directions, a.m, Some(spec))
        .map_err(|e| Error::config(format!("{PATH}.null_directions"), e.to_string()))?;
    for w in &mut null {
        for vi in &v {
            let c = linalg::dot(vi, w);
            linalg::axpy(-c, vi, w);
        }
        let n = linalg::norm(w);
        if n < 1e-8 {
            return Err(Error::config(format!("{PATH}.null_directions"), "direction lies in the spike span"));
        }
        w.iter_mut().for_each(|x| *x /= n);
    }
    let scale = 1.0 / (a.m as f64 * d[0] * d[0]);
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let tp = top(&draw, ens.spiked(), s, true, run.solver)?;
        let m = overlap_matrix(&v, &tp.vectors);
        let (mm, mtm) = gram_pair(&m);
        let mut rows = Vec::new();
        for i in 0..s {
            for j in 0..s {
                let target = if i == j { u } else { 0.0 };
                rows.push(row(NAME, t, i * s + j, "mm_deviation", (mm[i][j] - target).abs()));
                rows.push(row(NAME, t, i * s + j, "mtm_deviation", (mtm[i][j] - target).abs()));
            }
        }
        let trace_gap = ((0..s).map(|i| mm[i][i]).sum::<f64>() - (0..s).map(|i| mtm[i][i]).sum::<f64>()).abs();
        rows.push(row(NAME, t, 0, "trace_gap", trace_gap));
        for (n, w) in null.iter().enumerate() {
            for (j, x) in tp.vectors.iter().enumerate() {
                let c = linalg::dot(w, x);
                rows.push(row(NAME, t, n * s + j, "null_ratio", c * c / scale));
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mut criteria = Vec::new();
    for stat in ["mm_deviation", "mtm_deviation"] {
        let mut worst = 0.0_f64;
        for idx in 0..s * s {
            worst = worst.max(stats::median(&collect(&rows, stat, idx))?);
        }
        criteria.push(Criterion::at_most(format!("{stat}_median"), worst, p.tolerance));
    }
    let null_samples: Vec<f64> = rows.iter().filter(|r| r.statistic == "null_ratio").map(|r| r.value).collect();
    if !null_samples.is_empty() {
        let (q, b) = domination_quantile(&null_samples, &p.probe, a.k)?;
        criteria.push(Criterion::at_most("null_space", q, b));
    }
    Ok(CheckReport::new(NAME, &run, criteria)
        .with_rows(rows)
        .note(format!("u(d) = {u:.6e}")))
}
