//! Quadratic forms of `G(z) = (H - z)^{-1}` and the spike-restricted
//! matrices built from it.

use faer::{Mat, MatRef};

use super::{linalg, Eigensystem};
use crate::{Complex64, Error, Result};

/// Relative distance below which a real `z` counts as sitting on an eigenvalue.
const POLE_TOL: f64 = 1e-12;

fn check_pole(values: &[f64], z: Complex64) -> Result<()> {
    if z.im == 0.0 {
        let scale = z.re.abs().max(1.0);
        if let Some(l) = values.iter().find(|&&l| (l - z.re).abs() <= POLE_TOL * scale) {
            return Err(Error::Pole(format!("z = {} coincides with eigenvalue {l}", z.re)));
        }
    }
    Ok(())
}

/// `<v, G(z) w>` through the eigen-expansion of `H`, zero modes included.
pub fn resolvent_form(h: &Eigensystem, z: Complex64, v: &[f64], w: &[f64]) -> Result<Complex64> {
    check_pole(&h.values, z)?;
    let pv = h.projections(v);
    let pw = h.projections(w);
    Ok(pv
        .iter()
        .zip(&pw)
        .zip(&h.values)
        .map(|((a, b), &l)| Complex64::new(a * b, 0.0) / (l - z))
        .sum())
}

/// Solves `(A - z) X = B` for real symmetric `A` by Gaussian elimination with
/// partial pivoting in complex arithmetic.
pub fn shifted_solve(a: MatRef<'_, f64>, z: Complex64, rhs: &[&[f64]]) -> Result<Vec<Vec<Complex64>>> {
    let n = a.nrows();
    let mut m: Vec<Complex64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { z } else { Complex64::new(0.0, 0.0) };
            m.push(Complex64::new(a[(i, j)], 0.0) - d);
        }
    }
    let mut b: Vec<Vec<Complex64>> = rhs
        .iter()
        .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
        .collect();
    let scale = linalg::max_abs(a).max(z.norm()).max(1.0);
    complex_solve_in_place(&mut m, n, &mut b, scale)?;
    Ok(b)
}

/// Dense complex solve on a row-major `n x n` matrix; overwrites `rhs`.
pub(crate) fn complex_solve_in_place(
    m: &mut [Complex64],
    n: usize,
    rhs: &mut [Vec<Complex64>],
    scale: f64,
) -> Result<()> {
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if m[i * n + k].norm() > m[p * n + k].norm() {
                p = i;
            }
        }
        if m[p * n + k].norm() <= 1e-14 * scale {
            return Err(Error::Pole(format!("singular shifted matrix at pivot {k}")));
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            for r in rhs.iter_mut() {
                r.swap(k, p);
            }
        }
        let piv = m[k * n + k];
        for i in k + 1..n {
            let f = m[i * n + k] / piv;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k + 1..n {
                let u = m[k * n + j];
                m[i * n + j] -= f * u;
            }
            for r in rhs.iter_mut() {
                let u = r[k];
                r[i] -= f * u;
            }
        }
    }
    for r in rhs.iter_mut() {
        for k in (0..n).rev() {
            let mut acc = r[k];
            for j in k + 1..n {
                acc -= m[k * n + j] * r[j];
            }
            r[k] = acc / m[k * n + k];
        }
    }
    Ok(())
}

/// Inverse of a small complex matrix (row-major).
pub(crate) fn complex_inverse(a: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    let mut m = a.to_vec();
    let scale = a.iter().fold(1.0_f64, |s, x| s.max(x.norm()));
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|j| (0..n).map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    complex_solve_in_place(&mut m, n, &mut cols, scale)?;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[i * n + j] = c[i];
        }
    }
    Ok(out)
}

/// `<v, (A - z)^{-1} w>` by a direct linear solve.
pub fn resolvent_form_direct(a: MatRef<'_, f64>, z: Complex64, v: &[f64], w: &[f64]) -> Result<Complex64> {
    let x = shifted_solve(a, z, &[w])?;
    Ok(v.iter().zip(&x[0]).map(|(a, b)| b * *a).sum())
}

/// `<v, P_A w>` for the spectral projection onto the eigenvectors in `set`
/// (0-based indices into the nonincreasing order).
pub fn spectral_projection_form(q: &Eigensystem, set: &[usize], v: &[f64], w: &[f64]) -> Result<f64> {
    let u = q.vectors.as_ref().expect("eigenvectors were not computed");
    let mut acc = 0.0;
    for &i in set {
        if i >= u.ncols() {
            return Err(Error::domain(format!("index {} outside 1..={}", i + 1, u.ncols())));
        }
        acc += linalg::dot_col(u.col(i), v) * linalg::dot_col(u.col(i), w);
    }
    Ok(acc)
}

/// Precomputed `P = Z^T V` so that `V^T G(z) V = sum_i P_i P_i^T / (lambda_i - z)`
/// costs `O(M |R|^2)` per point.
#[derive(Clone, Debug)]
pub struct SpikeResolvent {
    pub lambda: Vec<f64>,
    /// `M x |R|`.
    pub p: Mat<f64>,
    pub sqrt_phi: f64,
}

impl SpikeResolvent {
    pub fn new(h: &Eigensystem, v: MatRef<'_, f64>, phi: f64) -> Result<Self> {
        let u = h.vectors.as_ref().expect("eigenvectors were not computed");
        if v.nrows() != u.nrows() {
            return Err(Error::Shape(format!("V has {} rows, H is {}", v.nrows(), u.nrows())));
        }
        let k = v.ncols();
        for a in 0..k {
            for b in 0..k {
                let g: f64 = (0..v.nrows()).map(|i| v[(i, a)] * v[(i, b)]).sum();
                let t = if a == b { 1.0 } else { 0.0 };
                if (g - t).abs() > 1e-10 {
                    return Err(Error::domain("V is not an isometry"));
                }
            }
        }
        let p = u.transpose() * v;
        Ok(Self {
            lambda: h.values.clone(),
            p,
            sqrt_phi: phi.sqrt(),
        })
    }

    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    /// `V^T G(z) V`, row-major.
    pub fn vgv(&self, z: Complex64) -> Result<Vec<Complex64>> {
        check_pole(&self.lambda, z)?;
        let k = self.rank();
        let mut out = vec![Complex64::new(0.0, 0.0); k * k];
        for (i, &l) in self.lambda.iter().enumerate() {
            let g = 1.0 / (l - z);
            for a in 0..k {
                let pa = self.p[(i, a)];
                if pa == 0.0 {
                    continue;
                }
                for b in 0..k {
                    out[a * k + b] += g * (pa * self.p[(i, b)]);
                }
            }
        }
        Ok(out)
    }

    /// `W(z) = phi^{1/2} (I + z V^T G(z) V)`, row-major.
    pub fn w_matrix(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let k = self.rank();
        let mut w = self.vgv(z)?;
        for a in 0..k {
            for b in 0..k {
                let id = if a == b { 1.0 } else { 0.0 };
                w[a * k + b] = self.sqrt_phi * (id + z * w[a * k + b]);
            }
        }
        Ok(w)
    }

    /// `W(x)` for real `x` off the spectrum, as a dense symmetric matrix.
    pub fn w_matrix_real(&self, x: f64) -> Result<Mat<f64>> {
        let k = self.rank();
        let w = self.w_matrix(Complex64::new(x, 0.0))?;
        Ok(Mat::from_fn(k, k, |a, b| 0.5 * (w[a * k + b].re + w[b * k + a].re)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::decompose;

    fn sample(n: usize) -> Mat<f64> {
        let b = Mat::from_fn(n, n + 3, |i, j| (((i * 13 + j * 7) % 17) as f64 - 8.0) / 9.0);
        &b * b.transpose()
    }

    #[test]
    fn expansion_matches_direct() {
        let a = sample(12);
        let e = decompose(a.as_ref()).unwrap();
        let v: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).cos()).collect();
        for z in [Complex64::new(1.0, 0.5), Complex64::new(-2.0, 0.0), Complex64::new(3.0, 1e-3)] {
            let x = resolvent_form(&e, z, &v, &w).unwrap();
            let y = resolvent_form_direct(a.as_ref(), z, &v, &w).unwrap();
            assert!((x - y).norm() <= 1e-8 * y.norm().max(1.0));
        }
    }

    #[test]
    fn herglotz() {
        let a = sample(8);
        let e = decompose(a.as_ref()).unwrap();
        let v = vec![1.0 / 8f64.sqrt(); 8];
        let g = resolvent_form(&e, Complex64::new(0.7, 0.2), &v, &v).unwrap();
        assert!(g.im > 0.0);
    }

    #[test]
    fn zero_matrix_kernel() {
        let e = decompose(Mat::<f64>::zeros(3, 3).as_ref()).unwrap();
        let v = [1.0, 0.0, 0.0];
        let z = Complex64::new(0.4, 0.3);
        let g = resolvent_form(&e, z, &v, &v).unwrap();
        assert!((g + 1.0 / z).norm() < 1e-15);
    }

    #[test]
    fn pole_detected() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 3.0][i] } else { 0.0 });
        let e = decompose(a.as_ref()).unwrap();
        let r = resolvent_form(&e, Complex64::new(3.0, 0.0), &[1.0, 0.0], &[1.0, 0.0]);
        assert!(matches!(r, Err(Error::Pole(_))));
    }

    #[test]
    fn projection_completeness() {
        let a = sample(6);
        let e = decompose(a.as_ref()).unwrap();
        let v = [0.6, 0.0, 0.8, 0.0, 0.0, 0.0];
        let all: Vec<usize> = (0..6).collect();
        assert!((spectral_projection_form(&e, &all, &v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(spectral_projection_form(&e, &[], &v, &v).unwrap(), 0.0);
    }
}
