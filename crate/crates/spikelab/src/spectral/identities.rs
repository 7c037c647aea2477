//! Deterministic linear-algebra identities relating `Q` to `H`: the master
//! equation for outliers, the resolvent perturbation formula in its two
//! forms, and eigenvalue interlacing.

use faer::{Mat, MatRef};

use super::resolvent::{complex_inverse, shifted_solve, SpikeResolvent};
use super::{eigenvalues, linalg};
use crate::ensemble::Population;
use crate::{Complex64, Error, Result};

/// A root of `det(D^{-1} + W(x)) = 0`, located to the bisection limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterRoot {
    pub x: f64,
    pub bracket: (f64, f64),
    /// Number of eigenvalues of `D^{-1} + W` crossing zero inside the bracket.
    pub multiplicity: usize,
}

fn inverse_diagonal(d: &[f64]) -> Result<Vec<f64>> {
    d.iter()
        .map(|&x| {
            if x == 0.0 || !x.is_finite() {
                Err(Error::domain(format!("D must be invertible, got d = {x}")))
            } else {
                Ok(1.0 / x)
            }
        })
        .collect()
}

/// Number of negative eigenvalues of `D^{-1} + W(x)`.
fn negative_inertia(sr: &SpikeResolvent, dinv: &[f64], x: f64) -> Result<usize> {
    let mut m = sr.w_matrix_real(x)?;
    for (i, &di) in dinv.iter().enumerate() {
        m[(i, i)] += di;
    }
    Ok(eigenvalues(m.as_ref())?.iter().filter(|&&e| e < 0.0).count())
}

/// All roots of `det(D^{-1} + W(x)) = 0` in `interval`, largest first.
///
/// On an interval free of eigenvalues of `H`, `x -> W(x)` is nondecreasing
/// in the Loewner order because `H >= 0`. The negative inertia of
/// `D^{-1} + W(x)` is therefore nonincreasing and drops by the multiplicity
/// of each root, so bisecting on the inertia finds every root, double roots
/// included, without a grid.
pub fn master_equation_roots(sr: &SpikeResolvent, d: &[f64], interval: (f64, f64)) -> Result<Vec<MasterRoot>> {
    if d.len() != sr.rank() {
        return Err(Error::Shape(format!("{} strengths for {} directions", d.len(), sr.rank())));
    }
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(Error::domain(format!("empty search interval [{lo}, {hi}]")));
    }
    if let Some(l) = sr.lambda.iter().find(|&&l| l >= lo && l <= hi) {
        return Err(Error::domain(format!("search interval contains the eigenvalue {l} of H")));
    }
    if d.is_empty() {
        return Ok(Vec::new());
    }
    let dinv = inverse_diagonal(d)?;
    let mut roots = Vec::new();
    let mut stack = vec![(lo, negative_inertia(sr, &dinv, lo)?, hi, negative_inertia(sr, &dinv, hi)?)];
    while let Some((a, ca, b, cb)) = stack.pop() {
        if ca <= cb {
            continue;
        }
        if b - a <= 1e-12 * a.abs().max(1.0) {
            roots.push(MasterRoot {
                x: 0.5 * (a + b),
                bracket: (a, b),
                multiplicity: ca - cb,
            });
            continue;
        }
        let mid = 0.5 * (a + b);
        let cm = negative_inertia(sr, &dinv, mid)?;
        stack.push((a, ca, mid, cm));
        stack.push((mid, cm, b, cb));
    }
    roots.sort_by(|x, y| y.x.total_cmp(&x.x));
    Ok(roots)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootMatch {
    pub root: f64,
    /// 0-based index into the nonincreasing spectrum of `Q`.
    pub index: usize,
    pub eigenvalue: f64,
    pub distance: f64,
}

/// Pairs each root (counted with multiplicity) with the nearest unused
/// eigenvalue of `Q`.
pub fn match_roots(roots: &[MasterRoot], mu: &[f64]) -> Vec<RootMatch> {
    let mut used = vec![false; mu.len()];
    let mut out = Vec::new();
    for r in roots {
        for _ in 0..r.multiplicity {
            let best = mu
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .min_by(|a, b| (a.1 - r.x).abs().total_cmp(&(b.1 - r.x).abs()));
            if let Some((i, &m)) = best {
                used[i] = true;
                out.push(RootMatch {
                    root: r.x,
                    index: i,
                    eigenvalue: m,
                    distance: (m - r.x).abs(),
                });
            }
        }
    }
    out
}

/// `| <v, Sigma^{1/2} G~(z) Sigma^{1/2} w> - <v, [G - G V (phi^{1/2} z / (D^{-1} + W)) V^T G] w> |`
/// with both sides computed by independent direct solves.
pub fn identity_check_pert2(
    q: MatRef<'_, f64>,
    h: MatRef<'_, f64>,
    population: &Population,
    z: Complex64,
    v: &[f64],
    w: &[f64],
) -> Result<f64> {
    let m = population.aspect.m;
    if q.nrows() != m || h.nrows() != m || v.len() != m || w.len() != m {
        return Err(Error::Shape("pert2 inputs must all have dimension M".into()));
    }
    let mut sv = v.to_vec();
    let mut sw = w.to_vec();
    population.apply_sqrt_sigma(&mut sv);
    population.apply_sqrt_sigma(&mut sw);
    let lhs_x = shifted_solve(q, z, &[&sw])?;
    let lhs: Complex64 = sv.iter().zip(&lhs_x[0]).map(|(a, b)| b * *a).sum();

    let vmat = population.spike_directions();
    let k = vmat.ncols();
    let cols: Vec<Vec<f64>> = (0..k).map(|a| linalg::column(vmat, a)).collect();
    let mut rhs: Vec<&[f64]> = vec![w];
    rhs.extend(cols.iter().map(|c| c.as_slice()));
    let g = shifted_solve(h, z, &rhs)?;
    let cdot = |x: &[f64], y: &[Complex64]| -> Complex64 { x.iter().zip(y).map(|(a, b)| b * *a).sum() };
    let mut rhs_val = cdot(v, &g[0]);
    if k > 0 {
        let sqrt_phi = population.aspect.sqrt_phi();
        let d = population.spec.strengths();
        let dinv = inverse_diagonal(&d)?;
        let mut mmat = vec![Complex64::new(0.0, 0.0); k * k];
        for a in 0..k {
            for b in 0..k {
                let vgv = cdot(&cols[a], &g[1 + b]);
                let id = if a == b { 1.0 } else { 0.0 };
                mmat[a * k + b] = sqrt_phi * (id + z * vgv);
            }
            mmat[a * k + a] += dinv[a];
        }
        let inv = complex_inverse(&mmat, k)?;
        // G symmetric: <v, G V>_a = <v_a, G v>, computed from G v_a.
        let left: Vec<Complex64> = (0..k).map(|a| cdot(v, &g[1 + a])).collect();
        let right: Vec<Complex64> = (0..k).map(|b| cdot(&cols[b], &g[0])).collect();
        let mut corr = Complex64::new(0.0, 0.0);
        for a in 0..k {
            for b in 0..k {
                corr += left[a] * inv[a * k + b] * right[b];
            }
        }
        rhs_val -= corr * z * sqrt_phi;
    }
    Ok((lhs - rhs_val).norm())
}

/// `V^T G~(z) V` through the alternative form
/// `(phi^{1/2} z)^{-1} (D^{-1} - S (D^{-1} + W(z))^{-1} S)`, `S = diag(sqrt(1 + phi^{1/2} d) / d)`.
/// Row-major `|R| x |R|`.
pub fn projected_resolvent_form(sr: &SpikeResolvent, d: &[f64], z: Complex64) -> Result<Vec<Complex64>> {
    let k = sr.rank();
    if d.len() != k {
        return Err(Error::Shape(format!("{} strengths for {} directions", d.len(), k)));
    }
    let dinv = inverse_diagonal(d)?;
    let s: Vec<f64> = d
        .iter()
        .map(|&di| {
            let a = 1.0 + sr.sqrt_phi * di;
            if a <= 1e-12 {
                Err(Error::domain(format!("1 + phi^(1/2) d = {a} is not positive")))
            } else {
                Ok(a.sqrt() / di)
            }
        })
        .collect::<Result<_>>()?;
    let mut m = sr.w_matrix(z)?;
    for a in 0..k {
        m[a * k + a] += dinv[a];
    }
    let inv = complex_inverse(&m, k)?;
    let pre = 1.0 / (z * sr.sqrt_phi);
    let mut out = vec![Complex64::new(0.0, 0.0); k * k];
    for a in 0..k {
        for b in 0..k {
            let diag = if a == b { dinv[a] } else { 0.0 };
            out[a * k + b] = pre * (diag - s[a] * inv[a * k + b] * s[b]);
        }
    }
    Ok(out)
}

/// `V^T P V` for the spectral projection of `Q` onto the eigenvalues inside
/// the circle `|z - center| = radius`, from the trapezoid rule applied to
/// `-(2 pi i)^{-1} \oint V^T G~(z) V dz` with `nodes` points.
pub fn contour_projection(sr: &SpikeResolvent, d: &[f64], center: f64, radius: f64, nodes: usize) -> Result<Mat<f64>> {
    let k = sr.rank();
    let mut acc = vec![Complex64::new(0.0, 0.0); k * k];
    for j in 0..nodes {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64;
        let e = Complex64::from_polar(1.0, theta);
        let f = projected_resolvent_form(sr, d, center + radius * e)?;
        for (a, x) in acc.iter_mut().zip(&f) {
            *a += x * e;
        }
    }
    let scale = -radius / nodes as f64;
    Ok(Mat::from_fn(k, k, |a, b| scale * acc[a * k + b].re))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterlacingReport {
    pub holds: bool,
    /// 1-based index of the first violated inequality.
    pub violation: Option<usize>,
    pub detail: Option<String>,
}

impl InterlacingReport {
    fn ok() -> Self {
        Self {
            holds: true,
            violation: None,
            detail: None,
        }
    }

    fn fail(i: usize, detail: String) -> Self {
        Self {
            holds: false,
            violation: Some(i + 1),
            detail: Some(detail),
        }
    }
}

/// Rank-one chain: `mu_1 >= lambda_1 >= mu_2 >= ... >= mu_M >= lambda_M` for
/// a positive spike, and the mirrored chain for a negative one. Inputs are
/// nonincreasing.
pub fn interlacing_rank_one(mu: &[f64], lambda: &[f64], positive: bool, slack: f64) -> InterlacingReport {
    let n = mu.len().min(lambda.len());
    for i in 0..n {
        let (upper, lower) = if positive { (mu[i], lambda[i]) } else { (lambda[i], mu[i]) };
        if lower > upper + slack {
            return InterlacingReport::fail(i, format!("order broken at index {}: {upper} < {lower}", i + 1));
        }
        if i + 1 < n {
            let next = if positive { mu[i + 1] } else { lambda[i + 1] };
            if next > lower + slack {
                return InterlacingReport::fail(i, format!("order broken after index {}: {lower} < {next}", i + 1));
            }
        }
    }
    InterlacingReport::ok()
}

/// `mu_i in [lambda_{i + r'}, lambda_{i - r'}]`, with out-of-range bounds
/// replaced by `0` below and `+inf` above.
pub fn interlacing_general(mu: &[f64], lambda: &[f64], r_prime: usize, slack: f64) -> InterlacingReport {
    let n = mu.len();
    for i in 0..n {
        let upper = if i >= r_prime { lambda[i - r_prime] } else { f64::INFINITY };
        let lower = lambda.get(i + r_prime).copied().unwrap_or(0.0);
        if mu[i] > upper + slack || mu[i] < lower - slack {
            return InterlacingReport::fail(
                i,
                format!("mu_{} = {} outside [{lower}, {upper}]", i + 1, mu[i]),
            );
        }
    }
    InterlacingReport::ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_examples() {
        assert!(interlacing_rank_one(&[5.0, 3.0, 1.0], &[4.0, 2.0, 0.5], true, 0.0).holds);
        let r = interlacing_rank_one(&[5.0, 1.0, 1.0], &[4.0, 2.0, 0.5], true, 0.0);
        assert_eq!(r.violation, Some(2));
        assert!(interlacing_rank_one(&[3.0, 1.0], &[4.0, 2.0], false, 0.0).holds);
        assert!(interlacing_general(&[3.0, 2.0, 1.0], &[3.0, 2.0, 1.0], 0, 0.0).holds);
        assert!(!interlacing_general(&[9.0, 8.0, 1.0], &[3.0, 2.0, 1.0], 1, 0.0).holds);
    }
}
