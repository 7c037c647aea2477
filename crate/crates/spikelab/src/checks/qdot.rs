//! The mean-centered matrix `Q_dot`: outlier, sticking and cone checks rerun
//! on it, plus invariance under row-wise mean shifts of the data.

use serde::{Deserialize, Serialize};

use super::cones::{cone_near, ConeParams};
use super::outliers::{outlier_locations, sticking, OutlierLocationParams, StickingParams};
use super::{row, CheckReport, Criterion, RunSettings};
use crate::ensemble::{Ensemble, SampleDraw, Variant};
use crate::rng::{self, Stream};
use crate::spectral::linalg;
use crate::Result;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QdotParams {
    pub locations: OutlierLocationParams,
    pub sticking: StickingParams,
    pub cone: ConeParams,
    /// Number of draws for the shift-invariance test; zero skips it.
    pub shift_trials: usize,
    /// Bound on `max |Q_dot(X + a 1^T) - Q_dot(X)| / max(1, max |Q_dot(X)|)`.
    pub shift_tolerance: f64,
    pub trials: Option<usize>,
}

impl Default for QdotParams {
    fn default() -> Self {
        Self {
            locations: OutlierLocationParams::default(),
            sticking: StickingParams::default(),
            cone: ConeParams {
                median_tolerance: Some(0.05),
                ..ConeParams::default()
            },
            shift_trials: 3,
            shift_tolerance: 1e-10,
            trials: None,
        }
    }
}

/// Relative change of `Q_dot` and of `Q` when every row of the noise gets a
/// random constant added, for one draw.
pub fn shift_change(ens: &Ensemble, seed: u64, trial: u64) -> Result<(f64, f64)> {
    let pop = &ens.population;
    let x = pop.sample_noise(ens.config.law, seed, trial);
    let mut r = rng::stream(seed, trial, Stream::Probe);
    let shift: Vec<f64> = (0..x.nrows()).map(|_| StandardNormal.sample(&mut r)).collect();
    let mut xs = x.clone();
    for j in 0..xs.ncols() {
        for (i, s) in shift.iter().enumerate() {
            xs[(i, j)] += s;
        }
    }
    let base = SampleDraw::assemble(pop, x, seed);
    let moved = SampleDraw::assemble(pop, xs, seed);
    let rel = |a: &faer::Mat<f64>, b: &faer::Mat<f64>| linalg::max_abs((a - b).as_ref()) / linalg::max_abs(a.as_ref()).max(1.0);
    Ok((rel(base.qdot(), moved.qdot()), rel(base.q(), moved.q())))
}

pub fn qdot_equivalence(ens: &Ensemble, p: &QdotParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "qdot_equivalence";
    let run = run.with_trials(p.trials);
    let centered = ens.config.clone().with_variant(Variant::MeanCentered).build()?;
    let mut parts = vec![
        outlier_locations(&centered, &p.locations, &run)?,
        sticking(&centered, &p.sticking, &run)?,
        cone_near(&centered, &p.cone, &run)?,
    ];
    if p.shift_trials > 0 && !run.validate_only {
        let mut rows = Vec::new();
        let (mut worst_dot, mut least_plain) = (0.0_f64, f64::INFINITY);
        for t in 0..p.shift_trials {
            let (dot, plain) = shift_change(ens, run.seed, t as u64)?;
            rows.push(row("shift", t, 0, "qdot_change", dot));
            rows.push(row("shift", t, 0, "q_change", plain));
            worst_dot = worst_dot.max(dot);
            least_plain = least_plain.min(plain);
        }
        parts.push(
            CheckReport::new("shift", &run, vec![Criterion::at_most("qdot_invariance", worst_dot, p.shift_tolerance)])
                .with_rows(rows)
                .note(format!("smallest relative change of Q under the same shifts: {least_plain:.3e}")),
        );
    }
    Ok(CheckReport::combine(NAME, &run, parts))
}
