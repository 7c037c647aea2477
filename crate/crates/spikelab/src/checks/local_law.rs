//! Isotropic local law for the resolvent of `H`.

use serde::{Deserialize, Serialize};

use super::{domination_quantile, row, CheckReport, Criterion, DominationProbe, RunSettings, TableRow};
use crate::ensemble::{resolve_directions, DirectionSpec, Ensemble};
use crate::exec::map_trials;
use crate::laws::{stieltjes_m, Aspect, DomainGrid, Regime, SpectralPoint};
use crate::spectral::{self, linalg, resolvent_form, Eigensystem};
use crate::{Complex64, Error, Result};

/// One evaluation of `|<v, G w> - m(z) <v, w>|` against its scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicResidual {
    pub z: SpectralPoint,
    pub observed: f64,
    pub psi: f64,
}

impl IsotropicResidual {
    pub fn ratio(&self) -> f64 {
        self.observed / self.psi
    }
}

/// `(Im m_phi / (N eta))^{1/2} + 1/(N eta)`; the second term is dropped
/// outside the bulk.
pub fn psi(p: &SpectralPoint, aspect: &Aspect, regime: Regime) -> Result<f64> {
    let n = aspect.n as f64;
    let m = stieltjes_m(p.z(), aspect.phi)?;
    let base = (m.im.max(0.0) / (n * p.eta)).sqrt();
    Ok(match regime {
        Regime::S => base + 1.0 / (n * p.eta),
        Regime::STilde | Regime::SHat => base,
    })
}

/// Residual of the `M x M` resolvent, whose limit is `m_{1/phi}`.
pub fn isotropic_residual(h: &Eigensystem, aspect: &Aspect, regime: Regime, p: SpectralPoint, v: &[f64], w: &[f64]) -> Result<IsotropicResidual> {
    let g = resolvent_form(h, p.z(), v, w)?;
    let m = stieltjes_m(p.z(), 1.0 / aspect.phi)?;
    let observed = (g - m * Complex64::new(linalg::dot(v, w), 0.0)).norm();
    Ok(IsotropicResidual {
        z: p,
        observed,
        psi: psi(&p, aspect, regime)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsotropicParams {
    pub energies: usize,
    pub heights: usize,
    /// Extra points right of the bulk; zero disables them.
    pub outside_points: usize,
    pub outside_eta: f64,
    pub omega: f64,
    /// Every pair `(i, j)` with `i <= j` is evaluated.
    pub directions: Vec<DirectionSpec>,
    pub probe: DominationProbe,
    pub trials: Option<usize>,
}

impl Default for IsotropicParams {
    fn default() -> Self {
        Self {
            energies: 10,
            heights: 5,
            outside_points: 0,
            outside_eta: 1e-3,
            omega: 0.1,
            directions: vec![DirectionSpec::Random { seed: 21 }, DirectionSpec::Random { seed: 22 }],
            probe: DominationProbe::with_constant(10.0),
            trials: None,
        }
    }
}

pub fn isotropic_law(ens: &Ensemble, p: &IsotropicParams, run: &RunSettings) -> Result<CheckReport> {
    const NAME: &str = "isotropic_law";
    const PATH: &str = "checks.isotropic_law";
    if !ens.population.spec.is_empty() {
        return Err(Error::config("ensemble.spikes", "the isotropic law check needs Sigma = I"));
    }
    p.probe.validate(&format!("{PATH}.probe"))?;
    let run = run.with_trials(p.trials);
    let a = ens.aspect;
    let grid_err = |e: Error| Error::config(PATH, e.to_string());
    let mut grids = vec![DomainGrid::bulk(&a, p.omega, p.energies, p.heights).map_err(grid_err)?];
    if p.outside_points > 0 {
        grids.push(DomainGrid::outside_right(&a, p.omega, p.outside_points, p.outside_eta).map_err(grid_err)?);
    }
    let dirs = resolve_directions(&p.directions, a.m, None).map_err(|e| Error::config(format!("{PATH}.directions"), e.to_string()))?;
    let mut pairs = Vec::new();
    for i in 0..dirs.len() {
        for j in i..dirs.len() {
            pairs.push((i, j));
        }
    }
    let per_trial = map_trials(run.trials, run.execution, |t| {
        let draw = ens.draw(run.seed, t as u64);
        let h = spectral::decompose(draw.matrix(ens.reference()).as_ref())?;
        let mut rows = Vec::new();
        let mut idx = 0;
        for g in &grids {
            for &z in &g.points {
                let worst = pairs
                    .iter()
                    .map(|&(i, j)| isotropic_residual(&h, &a, g.regime, z, &dirs[i], &dirs[j]).map(|r| r.ratio()))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                let stat = if g.regime == Regime::S { "ratio_s" } else { "ratio_s_tilde" };
                rows.push(row(NAME, t, idx, stat, worst));
                idx += 1;
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<TableRow> = per_trial.into_iter().flatten().collect();
    let mut criteria = Vec::new();
    for stat in ["ratio_s", "ratio_s_tilde"] {
        let v: Vec<f64> = rows.iter().filter(|r| r.statistic == stat).map(|r| r.value).collect();
        if v.is_empty() {
            continue;
        }
        let mx = v.iter().copied().fold(0.0, f64::max);
        let (q, _) = domination_quantile(&v, &p.probe, a.k)?;
        criteria.push(Criterion::at_most(format!("max_{stat}"), mx, p.probe.bound(a.k)));
        criteria.push(Criterion::at_most(format!("quantile_{stat}"), q, p.probe.bound(a.k)));
    }
    Ok(CheckReport::new(NAME, &run, criteria)
        .with_rows(rows)
        .note(format!("{} grid points, {} direction pairs", grids.iter().map(|g| g.points.len()).sum::<usize>(), pairs.len())))
}
