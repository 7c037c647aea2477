//! Lanczos with full reorthogonalisation for the top of a symmetric spectrum.
//!
//! Every returned pair is certified against its true residual
//! `|A y - theta y|`; if certification fails the caller gets an error and is
//! expected to fall back to a dense decomposition.

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};

use super::{decompose, linalg};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub max_iter: usize,
    /// Residual tolerance relative to `max(1, |theta_1|)`.
    pub tol: f64,
    pub seed: u64,
    /// How often (in iterations) the tridiagonal problem is re-solved.
    pub check_every: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol: 1e-10,
            seed: 0,
            check_every: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PartialEigen {
    /// Nonincreasing.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Top `count` eigenpairs of the symmetric operator `apply` on `R^dim`.
pub fn top_eigenpairs<F>(apply: F, dim: usize, count: usize, opts: &KrylovOptions) -> Result<PartialEigen>
where
    F: Fn(&[f64], &mut [f64]),
{
    if count == 0 || count > dim {
        return Err(Error::domain(format!("requested {count} eigenpairs of a {dim}-dimensional operator")));
    }
    let max_iter = opts.max_iter.min(dim).max(count);
    let mut r = rng::stream(opts.seed, 0, Stream::Krylov);
    let mut q: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let nq = linalg::norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alpha = Vec::with_capacity(max_iter);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iter);
    let mut w = vec![0.0; dim];

    for j in 0..max_iter {
        basis.push(q.clone());
        w.iter_mut().for_each(|x| *x = 0.0);
        apply(&q, &mut w);
        let a = linalg::dot(&w, &q);
        alpha.push(a);
        for _ in 0..2 {
            for u in &basis {
                let c = linalg::dot(u, &w);
                linalg::axpy(-c, u, &mut w);
            }
        }
        let b = linalg::norm(&w);
        beta.push(b);
        let m = j + 1;
        let exhausted = m == max_iter;
        let invariant = b <= 1e-13 * alpha.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        if m >= count && (m % opts.check_every == 0 || exhausted || invariant) {
            if let Some(out) = try_extract(&apply, &basis, &alpha, &beta, count, opts, invariant)? {
                return Ok(PartialEigen { iterations: m, ..out });
            }
            if invariant || exhausted {
                break;
            }
        }
        if invariant {
            break;
        }
        q = w.iter().map(|x| x / b).collect();
    }
    Err(Error::Numerical(format!(
        "Lanczos did not certify {count} eigenpairs within {max_iter} iterations"
    )))
}

fn try_extract<F>(
    apply: &F,
    basis: &[Vec<f64>],
    alpha: &[f64],
    beta: &[f64],
    count: usize,
    opts: &KrylovOptions,
    invariant: bool,
) -> Result<Option<PartialEigen>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = decompose(t.as_ref())?;
    let s = eig.vectors.as_ref().expect("vectors");
    let scale = eig.values[0].abs().max(eig.values[m - 1].abs()).max(1.0);
    let b_last = beta[m - 1];
    for i in 0..count {
        let est = if invariant { 0.0 } else { b_last * s[(m - 1, i)].abs() };
        if est > opts.tol * scale {
            return Ok(None);
        }
    }
    let dim = basis[0].len();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    let mut ay = vec![0.0; dim];
    for i in 0..count {
        let mut y = vec![0.0; dim];
        for (k, u) in basis.iter().enumerate() {
            linalg::axpy(s[(k, i)], u, &mut y);
        }
        let ny = linalg::norm(&y);
        y.iter_mut().for_each(|x| *x /= ny);
        let mut pivot = 0;
        for (k, v) in y.iter().enumerate() {
            if v.abs() > y[pivot].abs() {
                pivot = k;
            }
        }
        if y[pivot] < 0.0 {
            y.iter_mut().for_each(|x| *x = -*x);
        }
        ay.iter_mut().for_each(|x| *x = 0.0);
        apply(&y, &mut ay);
        let theta = eig.values[i];
        linalg::axpy(-theta, &y, &mut ay);
        let res = linalg::norm(&ay);
        if res > 100.0 * opts.tol * scale {
            return Err(Error::Numerical(format!(
                "Lanczos Ritz pair {i} failed certification (residual {res:e})"
            )));
        }
        values.push(theta);
        vectors.push(y);
        residuals.push(res);
    }
    Ok(Some(PartialEigen {
        values,
        vectors,
        residuals,
        iterations: m,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..300).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let out = top_eigenpairs(
            |x, y| {
                for i in 0..x.len() {
                    y[i] = d[i] * x[i];
                }
            },
            300,
            3,
            &KrylovOptions::default(),
        )
        .unwrap();
        assert!((out.values[0] - 1.0).abs() < 1e-12);
        assert!((out.values[1] - 0.5).abs() < 1e-12);
        assert!((out.values[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((out.vectors[0][0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn matches_dense() {
        let n = 60;
        let b = Mat::from_fn(n, n, |i, j| (((i * 31 + j * 17) % 23) as f64 - 11.0) / 10.0);
        let a = &b * b.transpose();
        let dense = decompose(a.as_ref()).unwrap();
        let out = top_eigenpairs(|x, y| y.copy_from_slice(&linalg::matvec(a.as_ref(), x)), n, 4, &KrylovOptions::default()).unwrap();
        for i in 0..4 {
            assert!((out.values[i] - dense.values[i]).abs() < 1e-9 * dense.values[0]);
        }
    }
}
