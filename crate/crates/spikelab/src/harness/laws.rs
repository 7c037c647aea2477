//! Tabulated closed-form laws and their exactness checks.

use std::f64::consts::PI;

use crate::checks::{CheckReport, Criterion, RunSettings, TableRow};
use crate::laws::{
    classical_location, cone_mass, edges, fluctuation_scale, m_self_consistency_residual, mp_atom, mp_density,
    mp_density_companion, stieltjes_m, stieltjes_m_boundary, stieltjes_w, w_self_consistency_residual,
};
use crate::{quadrature, Complex64, Result};

use super::LawsConfig;

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn push(rows: &mut Vec<TableRow>, trial: usize, index: usize, statistic: &str, value: f64) {
    rows.push(TableRow {
        check: "laws".into(),
        trial,
        index,
        statistic: statistic.into(),
        value,
    });
}

/// `int rho_phi` (continuous part) under `x = gamma_- + (gamma_+ - gamma_-) (1 - cos t) / 2`,
/// which removes the square-root endpoints.
fn density_mass(phi: f64) -> Result<f64> {
    let (lo, hi) = edges(phi)?;
    let half = 0.5 * (hi - lo);
    let f = |t: f64| {
        let x = lo + half * (1.0 - t.cos());
        if x <= 0.0 {
            return 0.0;
        }
        mp_density(x, phi).unwrap_or(0.0) * half * t.sin()
    };
    Ok(quadrature::integrate(f, 0.0, PI, 1e-13, 1e-15)?.value)
}

/// Exactness of the closed forms over the configured aspect ratios, plus
/// plot-ready tables. Row `trial` is the position in `phi`.
pub fn analytics(cfg: &LawsConfig) -> Result<CheckReport> {
    let mut rows = Vec::new();
    let (mut res_m, mut res_w, mut inv_w, mut mass) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let n = cfg.points;
    for (p, &phi) in cfg.phi.iter().enumerate() {
        let (lo, hi) = edges(phi)?;
        // self-consistency on a complex grid of `n` points
        let heights = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
        let per = n.div_ceil(heights.len()).max(2);
        let mut count = 0;
        'grid: for e in linspace(lo - 1.0, hi + 2.0, per) {
            for &eta in &heights {
                if count == n {
                    break 'grid;
                }
                let z = Complex64::new(e, eta);
                let m = stieltjes_m(z, phi)?;
                let w = stieltjes_w(z, phi)?;
                res_m = res_m.max(m_self_consistency_residual(m, z, phi));
                res_w = res_w.max(w_self_consistency_residual(w, z, phi));
                count += 1;
            }
        }
        // w(theta(zeta)) = -1/zeta on both sides of the transition
        for zeta in linspace(1.05, 10.0, n / 2).chain(linspace(-10.0, -1.05, n / 2)) {
            let w = stieltjes_w(Complex64::new(classical_location(zeta, phi)?, 0.0), phi)?;
            inv_w = inv_w.max((w + 1.0 / zeta).norm());
        }
        let total = density_mass(phi)? + mp_atom(phi)?;
        mass = mass.max((total - 1.0).abs());
        push(&mut rows, p, 0, "phi", phi);
        push(&mut rows, p, 0, "total_mass", total);
        for (i, x) in linspace((lo - 0.5).max(1e-3), hi + 0.5, n).enumerate() {
            push(&mut rows, p, i, "x", x);
            push(&mut rows, p, i, "density", mp_density(x, phi)?);
            push(&mut rows, p, i, "density_companion", mp_density_companion(x, phi)?);
            let m = stieltjes_m_boundary(x, phi)?;
            push(&mut rows, p, i, "m_re", m.re);
            push(&mut rows, p, i, "m_im", m.im);
        }
        for (i, d) in linspace(1.01, 5.0, n).enumerate() {
            push(&mut rows, p, i, "d", d);
            push(&mut rows, p, i, "theta", classical_location(d, phi)?);
            push(&mut rows, p, i, "cone_mass", cone_mass(d, phi)?);
            push(&mut rows, p, i, "fluctuation_scale", fluctuation_scale(d, phi)?);
        }
    }
    let criteria = vec![
        Criterion::at_most("m_self_consistency", res_m, 1e-12),
        Criterion::at_most("w_self_consistency", res_w, 1e-12),
        Criterion::at_most("w_at_theta", inv_w, 1e-10),
        Criterion::at_most("normalization", mass, 1e-8),
    ];
    Ok(CheckReport::new("analytics", &RunSettings::new(0, 0), criteria).with_rows(rows))
}
