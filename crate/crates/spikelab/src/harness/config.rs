//! Versioned JSON experiment configuration.

use serde::{Deserialize, Serialize};

use crate::checks::bulk::{DelocalizationParams, LevelRepulsionParams, NonoutlierLawParams, RigidityQueParams, UniversalityParams};
use crate::checks::cones::{ConeParams, DegenerateParams};
use crate::checks::detection::{DetachmentParams, EstimationParams, SubcriticalParams};
use crate::checks::identities::{InterlacingParams, LinearAlgebraParams};
use crate::checks::local_law::IsotropicParams;
use crate::checks::outliers::{OutlierLocationParams, OutlierScalingParams, StickingParams};
use crate::checks::qdot::QdotParams;
use crate::checks::{CheckName, RunSettings, DEFAULT_TAU};
use crate::ensemble::{DirectionSpec, EnsembleConfig};
use crate::exec::Execution;
use crate::inference::{DEFAULT_DOMINANCE, DEFAULT_GAP_FACTOR};
use crate::spectral::Solver;
use crate::{Error, Result};

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

fn default_trials() -> usize {
    100
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Worker threads; `None` uses every core. Never affects results.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub laws: Option<LawsConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub infer: Option<InferConfig>,
}

/// Per-check parameters. A present entry selects the check for `check all`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub linear_algebra: Option<LinearAlgebraParams>,
    pub interlacing: Option<InterlacingParams>,
    pub outlier_locations: Option<OutlierLocationParams>,
    pub outlier_scaling: Option<OutlierScalingParams>,
    pub sticking: Option<StickingParams>,
    pub cone_near: Option<ConeParams>,
    pub cone_far: Option<ConeParams>,
    pub degenerate_cone: Option<DegenerateParams>,
    pub nonoutlier_delocalization: Option<DelocalizationParams>,
    pub nonoutlier_law: Option<NonoutlierLawParams>,
    pub isotropic_law: Option<IsotropicParams>,
    pub rigidity_and_que: Option<RigidityQueParams>,
    pub level_repulsion: Option<LevelRepulsionParams>,
    pub universality_pair: Option<UniversalityParams>,
    pub qdot_equivalence: Option<QdotParams>,
    pub outlier_detachment: Option<DetachmentParams>,
    pub spike_estimation: Option<EstimationParams>,
    pub subcritical_detection: Option<SubcriticalParams>,
}

impl ChecksConfig {
    /// Checks with an entry, in canonical order.
    pub fn selected(&self) -> Vec<CheckName> {
        CheckName::ALL.iter().copied().filter(|&c| self.contains(c)).collect()
    }

    pub fn contains(&self, name: CheckName) -> bool {
        match name {
            CheckName::LinearAlgebra => self.linear_algebra.is_some(),
            CheckName::Interlacing => self.interlacing.is_some(),
            CheckName::OutlierLocations => self.outlier_locations.is_some(),
            CheckName::OutlierScaling => self.outlier_scaling.is_some(),
            CheckName::Sticking => self.sticking.is_some(),
            CheckName::ConeNear => self.cone_near.is_some(),
            CheckName::ConeFar => self.cone_far.is_some(),
            CheckName::DegenerateCone => self.degenerate_cone.is_some(),
            CheckName::NonoutlierDelocalization => self.nonoutlier_delocalization.is_some(),
            CheckName::NonoutlierLaw => self.nonoutlier_law.is_some(),
            CheckName::IsotropicLaw => self.isotropic_law.is_some(),
            CheckName::RigidityAndQue => self.rigidity_and_que.is_some(),
            CheckName::LevelRepulsion => self.level_repulsion.is_some(),
            CheckName::UniversalityPair => self.universality_pair.is_some(),
            CheckName::QdotEquivalence => self.qdot_equivalence.is_some(),
            CheckName::OutlierDetachment => self.outlier_detachment.is_some(),
            CheckName::SpikeEstimation => self.spike_estimation.is_some(),
            CheckName::SubcriticalDetection => self.subcritical_detection.is_some(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Strength of one configured spike.
    D,
    /// Aspect ratio, with `M = round(phi N)`.
    Phi,
}

fn default_window_constant() -> f64 {
    5.0
}

fn default_gap_factor() -> f64 {
    DEFAULT_GAP_FACTOR
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// 1-based position in `ensemble.spikes` for a `d` sweep.
    #[serde(default = "one")]
    pub spike: usize,
    pub values: Vec<f64>,
    #[serde(default = "default_gap_factor")]
    pub gap_factor: f64,
    /// The 0.5 crossing must fall in `1 +- c K^{-1/3}` (d sweeps only).
    #[serde(default = "default_window_constant")]
    pub window_constant: f64,
    #[serde(default)]
    pub trials: Option<usize>,
}

fn default_phis() -> Vec<f64> {
    vec![0.25, 1.0, 4.0]
}

fn default_points() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawsConfig {
    #[serde(default = "default_phis")]
    pub phi: Vec<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for LawsConfig {
    fn default() -> Self {
        Self {
            phi: default_phis(),
            points: default_points(),
        }
    }
}

fn default_eigenvalues() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Leading eigenvalues recorded per trial.
    #[serde(default = "default_eigenvalues")]
    pub eigenvalues: usize,
    /// Also write the matrices of trial 0 to `draw.bin`.
    #[serde(default)]
    pub dump: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            eigenvalues: default_eigenvalues(),
            dump: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// One eigenvalue per line (first CSV column), any order.
    Spectrum,
    /// Raw data, `M` rows by `N` columns, converted through `Q_dot`.
    Data,
}

fn default_support_threshold() -> f64 {
    3.0
}

fn default_dominance() -> f64 {
    DEFAULT_DOMINANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferConfig {
    pub input: String,
    pub kind: InputKind,
    /// Dimensions for a spectrum input; data inputs take them from the file.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_gap_factor")]
    pub gap_factor: f64,
    #[serde(default = "default_support_threshold")]
    pub support_threshold: f64,
    /// Candidate directions for subcritical bias detection (data inputs).
    #[serde(default)]
    pub candidates: Vec<DirectionSpec>,
    /// Number of non-outlier eigenvectors averaged by the bias detector.
    #[serde(default = "default_bias_width")]
    pub bias_width: usize,
    #[serde(default = "default_dominance")]
    pub factor: f64,
}

fn default_bias_width() -> usize {
    10
}

/// Parses and validates a configuration, reporting the JSON path of the
/// first offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path.is_empty() { ".".to_string() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn new(ensemble: Option<EnsembleConfig>) -> Self {
        Self {
            version: SCHEMA_VERSION,
            ensemble,
            seed: 0,
            trials: default_trials(),
            threads: None,
            solver: Solver::Dense,
            tau: DEFAULT_TAU,
            output: None,
            checks: ChecksConfig::default(),
            sweep: None,
            laws: None,
            simulate: None,
            infer: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config("tau", "must lie in (0, 1)"));
        }
        if let Some(e) = &self.ensemble {
            e.build()?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep.values", "grid must be nonempty"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("sweep.values", "values must be finite"));
            }
            if s.trials == Some(0) {
                return Err(Error::config("sweep.trials", "must be at least 1"));
            }
        }
        if let Some(l) = &self.laws {
            if l.points < 2 {
                return Err(Error::config("laws.points", "need at least 2 points"));
            }
            if let Some(i) = l.phi.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
                return Err(Error::config(format!("laws.phi[{i}]"), "must be positive"));
            }
        }
        Ok(())
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            tau: self.tau,
            ..RunSettings::new(self.trials, self.seed)
                .with_execution(Execution::threads(self.threads))
                .with_solver(self.solver)
        }
    }

    pub fn ensemble(&self) -> Result<&EnsembleConfig> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| Error::config("ensemble", "this command needs an ensemble"))
    }
}
