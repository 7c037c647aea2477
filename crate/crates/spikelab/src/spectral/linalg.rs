//! Small dense helpers shared by the ensemble and spectral code.

use faer::col::ColRef;
use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};

use super::Eigensystem;
use crate::rng::{self, Stream};
use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn col_slice(c: ColRef<'_, f64>) -> Option<&[f64]> {
    c.try_as_col_major().map(|c| c.as_slice())
}

pub fn dot_col(c: ColRef<'_, f64>, x: &[f64]) -> f64 {
    match col_slice(c) {
        Some(s) => dot(s, x),
        None => (0..x.len()).map(|i| c[i] * x[i]).sum(),
    }
}

pub fn axpy_col(alpha: f64, c: ColRef<'_, f64>, y: &mut [f64]) {
    match col_slice(c) {
        Some(s) => axpy(alpha, s, y),
        None => {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += alpha * c[i];
            }
        }
    }
}

/// Column `j` of `m` as an owned vector.
pub fn column(m: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// `A x` for a dense matrix.
pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        axpy_col(xj, a.col(j), &mut out);
    }
    out
}

/// Copies the lower triangle onto the upper one.
pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            a[(j, i)] = a[(i, j)];
        }
    }
}

/// `sum_i max(lambda_i, 1e-14)^p u_i u_i^T`.
pub fn psd_power(eig: &Eigensystem, p: f64) -> Mat<f64> {
    let u = eig.vectors.as_ref().expect("psd_power needs eigenvectors");
    let n = u.nrows();
    let scaled = Mat::from_fn(n, eig.values.len(), |i, j| u[(i, j)] * eig.values[j].max(1e-14).powf(p));
    let mut out = &scaled * u.transpose();
    symmetrize(&mut out);
    out
}

/// Haar orthogonal matrix: QR of a Gaussian matrix by modified Gram-Schmidt
/// (re-orthogonalised), which fixes the sign convention `R_ii > 0`.
pub fn haar_orthogonal(n: usize, seed: u64) -> Mat<f64> {
    let mut r = rng::stream(seed, 0, Stream::Directions);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        for _ in 0..2 {
            for u in &cols {
                let c = dot(u, &v);
                axpy(-c, u, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            cols.push(v);
        }
    }
    Mat::from_fn(n, n, |i, j| cols[j][i])
}

/// Given `p x n` rows that are orthonormal, returns an `n x n` orthogonal
/// matrix whose first `p` rows are those rows. Remaining rows come from
/// Gram-Schmidt applied to the standard basis vectors in order.
pub fn complete_orthonormal_rows(top: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (p, n) = (top.nrows(), top.ncols());
    let mut rows: Vec<Vec<f64>> = (0..p).map(|i| (0..n).map(|j| top[(i, j)]).collect()).collect();
    for (i, r) in rows.iter().enumerate() {
        if (norm(r) - 1.0).abs() > 1e-8 {
            return Err(Error::Numerical(format!("row {i} of Sigma^(-1/2) T is not a unit vector")));
        }
    }
    for k in 0..n {
        if rows.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for _ in 0..2 {
            for u in &rows {
                let c = dot(u, &v);
                axpy(-c, u, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            rows.push(v);
        }
    }
    if rows.len() != n {
        return Err(Error::Numerical("could not complete the orthogonal factor".into()));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_orthogonal() {
        let o = haar_orthogonal(12, 5);
        let g = o.transpose() * &o;
        for i in 0..12 {
            for j in 0..12 {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn completion_keeps_rows() {
        let o = haar_orthogonal(6, 9);
        let top = o.as_ref().subrows(0, 4);
        let full = complete_orthonormal_rows(top).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(full[(i, j)], o[(i, j)]);
            }
        }
        let g = &full * full.transpose();
        for i in 0..6 {
            assert!((g[(i, i)] - 1.0).abs() < 1e-12);
        }
    }
}
