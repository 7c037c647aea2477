//! Configuration, orchestration and serialization.
//!
//! Every entry point takes a validated [`ExperimentConfig`] and returns a
//! serializable report plus the per-trial rows that go to `tables/*.csv`.
//! Nothing schedule-dependent (timings, thread counts) enters a report, so
//! the same configuration and seed always produce the same bytes.

mod config;
mod laws;
mod output;

use serde::{Deserialize, Serialize};

pub use config::{
    parse_config, ChecksConfig, ExperimentConfig, InferConfig, InputKind, LawsConfig, SimulateConfig, SweepAxis,
    SweepConfig, SCHEMA_VERSION,
};
pub use laws::analytics;
pub use output::{format_value, read_matrix_csv, read_spectrum_csv, write_outputs, write_table, Outputs, CSV_HEADER};

use crate::checks::{self, bulk, cones, detection, identities, local_law, outliers, qdot};
use crate::checks::{CheckName, CheckReport, Criterion, RunSettings, TableRow};
use crate::ensemble::{resolve_directions, Ensemble, EnsembleConfig};
use crate::exec::map_trials;
use crate::inference::{self, BiasDetection, CorrectedDirection, SpikeEstimate};
use crate::laws::{classical_location, Aspect};
use crate::spectral::{self, linalg};
use crate::{stats, Error, Result};

/// Process exit status for a finished command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Fail = 1,
    Error = 2,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Top-level `report.json` of `check` and `universality`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    pub pass: bool,
    pub checks: Vec<CheckReport>,
}

impl ExperimentReport {
    pub fn new(command: &str, cfg: &ExperimentConfig, checks: Vec<CheckReport>) -> Self {
        Self {
            version: SCHEMA_VERSION,
            command: command.to_string(),
            seed: cfg.seed,
            trials: cfg.trials,
            ensemble: cfg.ensemble.clone(),
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn status(&self) -> Status {
        Status::from_pass(self.pass)
    }

    /// One table per check, named after it.
    pub fn tables(&self) -> Vec<(String, Vec<TableRow>)> {
        self.checks.iter().map(|c| (c.name.clone(), c.rows.clone())).collect()
    }
}

/// Runs one check with its configured parameters (defaults if absent).
pub fn run_check(name: CheckName, ens: &Ensemble, cfg: &ChecksConfig, run: &RunSettings) -> Result<CheckReport> {
    macro_rules! params {
        ($field:ident) => {
            &cfg.$field.clone().unwrap_or_default()
        };
    }
    match name {
        CheckName::LinearAlgebra => identities::linear_algebra(ens, params!(linear_algebra), run),
        CheckName::Interlacing => identities::interlacing(ens, params!(interlacing), run),
        CheckName::OutlierLocations => outliers::outlier_locations(ens, params!(outlier_locations), run),
        CheckName::OutlierScaling => outliers::outlier_scaling(ens, params!(outlier_scaling), run),
        CheckName::Sticking => outliers::sticking(ens, params!(sticking), run),
        CheckName::ConeNear => cones::cone_near(ens, params!(cone_near), run),
        CheckName::ConeFar => cones::cone_far(ens, params!(cone_far), run),
        CheckName::DegenerateCone => cones::degenerate_cone(ens, params!(degenerate_cone), run),
        CheckName::NonoutlierDelocalization => bulk::nonoutlier_delocalization(ens, params!(nonoutlier_delocalization), run),
        CheckName::NonoutlierLaw => bulk::nonoutlier_law(ens, params!(nonoutlier_law), run),
        CheckName::IsotropicLaw => local_law::isotropic_law(ens, params!(isotropic_law), run),
        CheckName::RigidityAndQue => bulk::rigidity_and_que(ens, params!(rigidity_and_que), run),
        CheckName::LevelRepulsion => bulk::level_repulsion(ens, params!(level_repulsion), run),
        CheckName::UniversalityPair => bulk::universality_pair(ens, params!(universality_pair), run),
        CheckName::QdotEquivalence => qdot::qdot_equivalence(ens, params!(qdot_equivalence), run),
        CheckName::OutlierDetachment => detection::outlier_detachment(ens, params!(outlier_detachment), run),
        CheckName::SpikeEstimation => detection::spike_estimation(ens, params!(spike_estimation), run),
        CheckName::SubcriticalDetection => detection::subcritical_detection(ens, params!(subcritical_detection), run),
    }
}

/// Resolves `name|all` against the configuration. `all` means every check
/// with an entry in `checks`.
pub fn select_checks(selector: &str, cfg: &ExperimentConfig) -> Result<Vec<CheckName>> {
    if selector == "all" {
        let sel = cfg.checks.selected();
        if sel.is_empty() {
            return Err(Error::config("checks", "`all` needs at least one configured check"));
        }
        Ok(sel)
    } else {
        Ok(vec![selector.parse()?])
    }
}

/// Runs the selected checks. Every hypothesis gate is evaluated before any
/// trial is sampled.
pub fn run_checks(cfg: &ExperimentConfig, names: &[CheckName], command: &str) -> Result<ExperimentReport> {
    let ens = cfg.ensemble()?.build()?;
    let run = cfg.run_settings();
    let dry = run.validation();
    for &name in names {
        match run_check(name, &ens, &cfg.checks, &dry) {
            Ok(_) | Err(Error::Empty(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let reports = names
        .iter()
        .map(|&n| run_check(n, &ens, &cfg.checks, &run))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::new(command, cfg, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub fraction: f64,
    pub median_mu1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Linear interpolation of where the fraction first reaches one half.
    pub crossing: Option<f64>,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
    #[serde(skip)]
    pub rows: Vec<TableRow>,
}

/// First point where the piecewise-linear fraction curve reaches `level`.
pub fn crossing_point(values: &[f64], fractions: &[f64], level: f64) -> Option<f64> {
    let first = fractions.iter().position(|&f| f >= level)?;
    if first == 0 {
        return Some(values[0]);
    }
    let (x0, x1) = (values[first - 1], values[first]);
    let (f0, f1) = (fractions[first - 1], fractions[first]);
    Some(x0 + (level - f0) / (f1 - f0) * (x1 - x0))
}

/// Ensemble at one sweep grid value.
fn sweep_ensemble(base: &EnsembleConfig, s: &SweepConfig, value: f64) -> Result<Ensemble> {
    let mut c = base.clone();
    match s.axis {
        SweepAxis::D => {
            let slot = c
                .spikes
                .get_mut(s.spike.wrapping_sub(1))
                .ok_or_else(|| Error::config("sweep.spike", format!("no spike at position {}", s.spike)))?;
            slot.d = value;
        }
        SweepAxis::Phi => {
            if !(value > 0.0) {
                return Err(Error::config("sweep.values", "aspect ratios must be positive"));
            }
            c.m = ((value * c.n as f64).round() as usize).max(1);
        }
    }
    c.build()
}

/// Outlier-detachment fraction over a grid. Every grid point reuses the same
/// trial seeds, so for a `d` sweep the fractions are computed on common
/// noise.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let s = cfg.sweep.as_ref().ok_or_else(|| Error::config("sweep", "missing sweep section"))?;
    let base = cfg.ensemble()?;
    let ensembles = s
        .values
        .iter()
        .map(|&v| sweep_ensemble(base, s, v))
        .collect::<Result<Vec<_>>>()?;
    let run = cfg.run_settings().with_trials(s.trials);
    let params = detection::DetachmentParams {
        gap_factor: s.gap_factor,
        ..Default::default()
    };
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for (i, (ens, &value)) in ensembles.iter().zip(&s.values).enumerate() {
        let rep = detection::outlier_detachment(ens, &params, &run)?;
        let mu1: Vec<f64> = rep.rows.iter().map(|r| r.value).collect();
        let a = ens.aspect;
        let threshold = a.gamma_plus + s.gap_factor * (a.k as f64).powf(-2.0 / 3.0);
        let point = SweepPoint {
            value,
            fraction: detection::detachment_fraction(&mu1, threshold),
            median_mu1: stats::median(&mu1)?,
        };
        rows.push(checks_row(i, "value", point.value));
        rows.push(checks_row(i, "fraction", point.fraction));
        rows.push(checks_row(i, "median_mu_1", point.median_mu1));
        points.push(point);
    }
    let fractions: Vec<f64> = points.iter().map(|p| p.fraction).collect();
    let increasing = s.values.windows(2).all(|w| w[0] < w[1]);
    let drops = fractions.windows(2).filter(|w| w[1] < w[0]).count();
    let mut criteria = vec![Criterion::at_most("monotone_violations", drops as f64, 0.0)];
    let crossing = if increasing { crossing_point(&s.values, &fractions, 0.5) } else { None };
    if s.axis == SweepAxis::D {
        let k = ensembles[0].aspect.k as f64;
        let half = s.window_constant * k.powf(-1.0 / 3.0);
        criteria.push(Criterion::within("crossing", crossing.unwrap_or(f64::NAN), 1.0 - half, 1.0 + half));
    }
    let pass = criteria.iter().all(|c| c.pass);
    Ok(SweepReport {
        version: SCHEMA_VERSION,
        command: "sweep".into(),
        seed: cfg.seed,
        trials: run.trials,
        axis: s.axis,
        points,
        crossing,
        criteria,
        pass,
        rows,
    })
}

fn checks_row(i: usize, statistic: &str, value: f64) -> TableRow {
    TableRow {
        check: "sweep".into(),
        trial: 0,
        index: i,
        statistic: statistic.into(),
        value,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    pub ensemble: EnsembleConfig,
    pub aspect: Aspect,
    /// Mean of each recorded eigenvalue over trials.
    pub mean_eigenvalues: Vec<f64>,
    /// `theta(d_i)` for right outliers.
    pub predicted_outliers: Vec<f64>,
    #[serde(skip)]
    pub rows: Vec<TableRow>,
}

/// Leading eigenvalues and squared overlaps of the leading eigenvectors with
/// every spike direction.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(SimulateReport, Option<Vec<u8>>)> {
    let ens = cfg.ensemble()?.build()?;
    let sc = cfg.simulate.clone().unwrap_or_default();
    let run = cfg.run_settings();
    let a = ens.aspect;
    let count = sc.eigenvalues.clamp(1, a.m);
    let spec = &ens.population.spec;
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let tp = checks::top(&draw, ens.spiked(), count, true, run.solver)?;
        let mut rows = Vec::new();
        for (j, &mu) in tp.values.iter().enumerate() {
            rows.push(TableRow {
                check: "simulate".into(),
                trial: t,
                index: j + 1,
                statistic: "mu".into(),
                value: mu,
            });
        }
        for (i, s) in spec.spikes.iter().enumerate() {
            for (j, xi) in tp.vectors.iter().enumerate() {
                let c = linalg::dot(&s.v, xi);
                rows.push(TableRow {
                    check: "simulate".into(),
                    trial: t,
                    index: j + 1,
                    statistic: format!("overlap_spike_{}", i + 1),
                    value: c * c,
                });
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mean_eigenvalues = (1..=count)
        .map(|j| {
            let v: Vec<f64> = rows.iter().filter(|r| r.statistic == "mu" && r.index == j).map(|r| r.value).collect();
            stats::mean(&v)
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted_outliers = ens.strengths()[..ens.outliers.s_plus]
        .iter()
        .map(|&d| classical_location(d, a.phi))
        .collect::<Result<Vec<_>>>()?;
    let dump = if sc.dump {
        let draw = ens.draw(run.seed, 0);
        let mut buf = Vec::new();
        draw.dump(&mut buf)?;
        Some(buf)
    } else {
        None
    };
    Ok((
        SimulateReport {
            version: SCHEMA_VERSION,
            command: "simulate".into(),
            seed: cfg.seed,
            trials: run.trials,
            ensemble: ens.config.clone(),
            aspect: a,
            mean_eigenvalues,
            predicted_outliers,
            rows,
        },
        dump,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferredSpike {
    pub estimate: SpikeEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<CorrectedDirection>,
    /// Coordinates of the eigenvector above the support threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub version: u32,
    pub command: String,
    pub aspect: Aspect,
    pub spikes: Vec<InferredSpike>,
    pub bias: Vec<BiasDetection>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<TableRow>,
}

/// Runs the inference program on a spectrum or a raw data matrix.
pub fn infer(cfg: &ExperimentConfig, input: &str) -> Result<InferenceReport> {
    let ic = cfg.infer.as_ref().ok_or_else(|| Error::config("infer", "missing infer section"))?;
    let mut notes = Vec::new();
    let (aspect, spectrum, vectors) = match ic.kind {
        InputKind::Spectrum => {
            let (m, n) = match (ic.m, ic.n) {
                (Some(m), Some(n)) => (m, n),
                _ => return Err(Error::config("infer.m", "spectrum input needs m and n")),
            };
            let aspect = Aspect::new(m, n).map_err(|e| Error::config("infer.m", e.to_string()))?;
            let mut s = read_spectrum_csv(input)?;
            s.sort_by(|a, b| b.total_cmp(a));
            (aspect, s, None)
        }
        InputKind::Data => {
            let data = read_matrix_csv(input)?;
            let aspect = Aspect::new(data.nrows(), data.ncols()).map_err(|e| Error::config("infer.input", e.to_string()))?;
            let q = inference::centered_covariance(data.as_ref())?;
            let e = spectral::decompose(q.as_ref())?;
            (aspect, e.values.clone(), Some(e))
        }
    };
    let estimates = inference::estimate_supercritical_spikes(&spectrum, &aspect, ic.gap_factor)?;
    let mut spikes = Vec::new();
    let mut rows = Vec::new();
    for est in estimates.iter() {
        rows.push(infer_row(est.index, "d_hat", est.d_hat));
        rows.push(infer_row(est.index, "stderr", est.stderr));
        let (direction, support) = match &vectors {
            Some(e) => {
                let xi = e.vector(est.index - 1);
                let dir = inference::corrected_eigenvector_estimate(&xi, est.d_hat, aspect.phi)?;
                if let Some(w) = &dir.warning {
                    notes.push(format!("eigenvalue {}: {w}", est.index));
                }
                (Some(dir), Some(inference::recover_support(&xi, ic.support_threshold)?))
            }
            None => (None, None),
        };
        spikes.push(InferredSpike {
            estimate: est.clone(),
            direction,
            support,
        });
    }
    if vectors.is_some() && spikes.iter().any(|s| s.support.is_some()) {
        notes.push("support recovery thresholds eigenvector entries; it is heuristic unless the spike is constant on its support".into());
    }
    let mut bias = Vec::new();
    if let Some(e) = &vectors {
        let outliers = estimates.len();
        let lo = outliers + 1;
        let hi = (outliers + ic.bias_width).min(aspect.k);
        if lo <= hi && !ic.candidates.is_empty() {
            let cands = resolve_directions(&ic.candidates, aspect.m, None).map_err(|e| Error::config("infer.candidates", e.to_string()))?;
            let vecs: Vec<Vec<f64>> = (lo..=hi).map(|a| e.vector(a - 1)).collect();
            for (i, c) in cands.iter().enumerate() {
                let b = inference::detect_subcritical_bias(&vecs, c, (lo, hi), outliers, aspect.phi, ic.factor, None)?;
                rows.push(infer_row(i, "bias_score", b.score));
                bias.push(b);
            }
            notes.push("implied |d - 1| does not identify the side of the transition".into());
        }
    } else if !ic.candidates.is_empty() {
        notes.push("bias detection needs eigenvectors; skipped for a spectrum input".into());
    }
    Ok(InferenceReport {
        version: SCHEMA_VERSION,
        command: "infer".into(),
        aspect,
        spikes,
        bias,
        notes,
        rows,
    })
}

fn infer_row(index: usize, statistic: &str, value: f64) -> TableRow {
    TableRow {
        check: "infer".into(),
        trial: 0,
        index,
        statistic: statistic.into(),
        value,
    }
}
