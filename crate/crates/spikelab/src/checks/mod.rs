//! Monte Carlo checks.
//!
//! Each check draws `trials` independent samples, reduces every draw to a
//! few normalized statistics and compares an aggregate (a high quantile, a
//! median, a KS distance) with a configured bound. Statements of the form
//! `X ≺ Y` are probed through [`DominationProbe`]: the empirical quantile of
//! `X / Y` must not exceed `K^epsilon * C`.

pub mod bulk;
pub mod cones;
pub mod detection;
pub mod identities;
pub mod local_law;
pub mod outliers;
pub mod qdot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{MatrixKind, SampleDraw};
use crate::exec::Execution;
use crate::spectral::{self, KrylovOptions, Solver};
use crate::{stats, Error, Result};

/// Default for the fixed small constant in the hypotheses gates.
pub const DEFAULT_TAU: f64 = 0.1;

/// Quantile test for a stochastic domination bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DominationProbe {
    /// Exponent of the `K^epsilon` slack. Zero turns the bound into `C`.
    pub epsilon: f64,
    pub quantile: f64,
    pub constant: f64,
}

impl Default for DominationProbe {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            quantile: 0.99,
            constant: 10.0,
        }
    }
}

impl DominationProbe {
    pub fn with_constant(constant: f64) -> Self {
        Self {
            constant,
            ..Self::default()
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("{path}.epsilon"), "must be finite and nonnegative"));
        }
        if !(self.quantile > 0.5 && self.quantile < 1.0) {
            return Err(Error::config(format!("{path}.quantile"), "must lie in (0.5, 1)"));
        }
        if !(self.constant > 0.0 && self.constant.is_finite()) {
            return Err(Error::config(format!("{path}.constant"), "must be positive"));
        }
        Ok(())
    }

    pub fn bound(&self, k: usize) -> f64 {
        (k as f64).powf(self.epsilon) * self.constant
    }
}

/// `(quantile of samples, K^epsilon C)`.
pub fn domination_quantile(samples: &[f64], probe: &DominationProbe, k: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("domination samples"));
    }
    Ok((stats::quantile(samples, probe.quantile)?, probe.bound(k)))
}

/// One pass/fail comparison inside a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Criterion {
    pub fn new(name: impl Into<String>, statistic: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let pass = statistic.is_finite()
            && lower.map_or(true, |l| statistic >= l)
            && upper.map_or(true, |u| statistic <= u);
        Self {
            name: name.into(),
            statistic,
            lower,
            upper,
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, statistic, None, Some(bound))
    }

    pub fn at_least(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, statistic, Some(bound), None)
    }

    pub fn within(name: impl Into<String>, statistic: f64, lower: f64, upper: f64) -> Self {
        Self::new(name, statistic, Some(lower), Some(upper))
    }

    fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}/{}", self.name);
        self
    }
}

/// One line of a per-trial table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub check: String,
    pub trial: usize,
    pub index: usize,
    pub statistic: String,
    pub value: f64,
}

/// Outcome of one check.
///
/// With a single upper-bounded criterion `statistic` and `bound` are that
/// criterion's values. Otherwise `statistic` counts failing criteria and
/// `bound` is zero, so `pass == (statistic <= bound)` always holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
    pub trials: usize,
    pub seed: u64,
    pub criteria: Vec<Criterion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Relative path of the per-trial CSV table, filled in by the harness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(skip)]
    pub rows: Vec<TableRow>,
}

impl CheckReport {
    pub fn new(name: &str, run: &RunSettings, criteria: Vec<Criterion>) -> Self {
        let (statistic, bound) = match criteria.as_slice() {
            [c] if c.lower.is_none() && c.upper.is_some() => (c.statistic, c.upper.unwrap_or(0.0)),
            _ => (criteria.iter().filter(|c| !c.pass).count() as f64, 0.0),
        };
        let pass = criteria.iter().all(|c| c.pass);
        Self {
            name: name.to_string(),
            statistic,
            bound,
            pass,
            trials: run.trials,
            seed: run.seed,
            criteria,
            notes: Vec::new(),
            table: None,
            rows: Vec::new(),
        }
    }

    pub fn with_rows(mut self, rows: Vec<TableRow>) -> Self {
        self.rows = rows;
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Folds several reports into one, prefixing criterion names.
    pub fn combine(name: &str, run: &RunSettings, parts: Vec<CheckReport>) -> Self {
        let mut criteria = Vec::new();
        let mut rows = Vec::new();
        let mut notes = Vec::new();
        for p in parts {
            criteria.extend(p.criteria.into_iter().map(|c| c.prefixed(&p.name)));
            notes.extend(p.notes.into_iter().map(|n| format!("{}: {n}", p.name)));
            rows.extend(p.rows.into_iter().map(|mut r| {
                r.check = format!("{name}/{}", r.check);
                r
            }));
        }
        let mut out = Self::new(name, run, criteria).with_rows(rows);
        out.notes = notes;
        out
    }
}

/// Settings shared by every check in a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub trials: usize,
    pub seed: u64,
    pub execution: Execution,
    pub solver: Solver,
    pub tau: f64,
    /// Run every hypothesis gate but no trials; per-check trial overrides
    /// are ignored so nothing is sampled.
    pub validate_only: bool,
}

impl RunSettings {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            execution: Execution::default(),
            solver: Solver::Dense,
            tau: DEFAULT_TAU,
            validate_only: false,
        }
    }

    /// Settings for a gate-only pass: zero trials, overrides ignored.
    pub fn validation(self) -> Self {
        Self {
            trials: 0,
            validate_only: true,
            ..self
        }
    }

    pub fn with_trials(self, trials: Option<usize>) -> Self {
        if self.validate_only {
            return self;
        }
        Self {
            trials: trials.unwrap_or(self.trials),
            ..self
        }
    }

    pub fn with_execution(self, execution: Execution) -> Self {
        Self { execution, ..self }
    }

    pub fn with_solver(self, solver: Solver) -> Self {
        Self { solver, ..self }
    }
}

/// Every check the harness can run, by configuration name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    LinearAlgebra,
    Interlacing,
    OutlierLocations,
    OutlierScaling,
    Sticking,
    ConeNear,
    ConeFar,
    DegenerateCone,
    NonoutlierDelocalization,
    NonoutlierLaw,
    IsotropicLaw,
    RigidityAndQue,
    LevelRepulsion,
    UniversalityPair,
    QdotEquivalence,
    OutlierDetachment,
    SpikeEstimation,
    SubcriticalDetection,
}

impl CheckName {
    pub const ALL: [CheckName; 18] = [
        CheckName::LinearAlgebra,
        CheckName::Interlacing,
        CheckName::OutlierLocations,
        CheckName::OutlierScaling,
        CheckName::Sticking,
        CheckName::ConeNear,
        CheckName::ConeFar,
        CheckName::DegenerateCone,
        CheckName::NonoutlierDelocalization,
        CheckName::NonoutlierLaw,
        CheckName::IsotropicLaw,
        CheckName::RigidityAndQue,
        CheckName::LevelRepulsion,
        CheckName::UniversalityPair,
        CheckName::QdotEquivalence,
        CheckName::OutlierDetachment,
        CheckName::SpikeEstimation,
        CheckName::SubcriticalDetection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::LinearAlgebra => "linear_algebra",
            CheckName::Interlacing => "interlacing",
            CheckName::OutlierLocations => "outlier_locations",
            CheckName::OutlierScaling => "outlier_scaling",
            CheckName::Sticking => "sticking",
            CheckName::ConeNear => "cone_near",
            CheckName::ConeFar => "cone_far",
            CheckName::DegenerateCone => "degenerate_cone",
            CheckName::NonoutlierDelocalization => "nonoutlier_delocalization",
            CheckName::NonoutlierLaw => "nonoutlier_law",
            CheckName::IsotropicLaw => "isotropic_law",
            CheckName::RigidityAndQue => "rigidity_and_que",
            CheckName::LevelRepulsion => "level_repulsion",
            CheckName::UniversalityPair => "universality_pair",
            CheckName::QdotEquivalence => "qdot_equivalence",
            CheckName::OutlierDetachment => "outlier_detachment",
            CheckName::SpikeEstimation => "spike_estimation",
            CheckName::SubcriticalDetection => "subcritical_detection",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config("check", format!("unknown check `{s}`")))
    }
}

/// The top `count` eigenvalues (and optionally eigenvectors) of one matrix
/// of a draw, nonincreasing.
#[derive(Clone, Debug, Default)]
pub(crate) struct Top {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub(crate) fn top(draw: &SampleDraw<'_>, kind: MatrixKind, count: usize, vectors: bool, solver: Solver) -> Result<Top> {
    let m = draw.population.aspect.m;
    let count = count.min(m);
    if solver == Solver::Krylov && count > 0 && 4 * count < m {
        let opts = KrylovOptions {
            seed: draw.seed,
            ..KrylovOptions::default()
        };
        if let Ok(p) = spectral::top_eigenpairs(|x, y| draw.apply(kind, x, y), m, count, &opts) {
            return Ok(Top {
                values: p.values,
                vectors: if vectors { p.vectors } else { Vec::new() },
            });
        }
    }
    let a = draw.matrix(kind);
    if vectors {
        let e = spectral::decompose(a.as_ref())?;
        Ok(Top {
            vectors: (0..count).map(|i| e.vector(i)).collect(),
            values: e.values[..count].to_vec(),
        })
    } else {
        let v = spectral::eigenvalues(a.as_ref())?;
        Ok(Top {
            values: v[..count].to_vec(),
            vectors: Vec::new(),
        })
    }
}

/// Rows of a per-trial table for one named statistic.
pub(crate) fn row(check: &str, trial: usize, index: usize, statistic: &str, value: f64) -> TableRow {
    TableRow {
        check: check.to_string(),
        trial,
        index,
        statistic: statistic.to_string(),
        value,
    }
}

/// Criteria for "samples look like chi^2_1": KS distance and the first
/// three raw moments within `se_multiple` standard errors of `(1, 3, 15)`.
pub(crate) fn chi2_criteria(prefix: &str, samples: &[f64], ks_threshold: f64, se_multiple: f64) -> Result<Vec<Criterion>> {
    let ks = stats::ks_one_sample(samples, stats::chi2_1_cdf)?;
    let mut out = vec![Criterion::at_most(format!("{prefix}ks_chi2_1"), ks, ks_threshold)];
    for (k, ((m, se), target)) in stats::raw_moments(samples)?.iter().zip(stats::CHI2_1_MOMENTS).enumerate() {
        let z = if *se > 0.0 { (m - target).abs() / se } else { f64::INFINITY };
        out.push(Criterion::at_most(format!("{prefix}moment_{}_se", k + 1), z, se_multiple));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_constant_samples() {
        let p = DominationProbe::with_constant(1.0);
        assert_eq!(domination_quantile(&[0.0; 10], &p, 100).unwrap(), (0.0, 1.0));
        assert_eq!(domination_quantile(&[2.5; 7], &p, 100).unwrap().0, 2.5);
        assert!(domination_quantile(&[], &p, 100).is_err());
    }

    #[test]
    fn report_invariant() {
        let run = RunSettings::new(3, 1);
        let one = CheckReport::new("x", &run, vec![Criterion::at_most("a", 2.0, 1.0)]);
        assert_eq!((one.statistic, one.bound, one.pass), (2.0, 1.0, false));
        let many = CheckReport::new(
            "y",
            &run,
            vec![Criterion::at_most("a", 0.5, 1.0), Criterion::within("b", 3.0, 1.6, 2.5)],
        );
        assert_eq!((many.statistic, many.bound, many.pass), (1.0, 0.0, false));
        let vacuous = CheckReport::new("z", &run, Vec::new());
        assert!(vacuous.pass && vacuous.statistic <= vacuous.bound);
    }

    #[test]
    fn nan_fails() {
        assert!(!Criterion::at_most("n", f64::NAN, 1.0).pass);
    }

    #[test]
    fn names_round_trip() {
        for c in CheckName::ALL {
            assert_eq!(c.as_str().parse::<CheckName>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
    }
}
