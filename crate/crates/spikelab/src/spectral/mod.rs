//! Eigendecompositions, resolvent quadratic forms and the deterministic
//! identities linking the spiked matrix to its unspiked reference.

pub mod identities;
pub mod lanczos;
pub mod linalg;
pub mod resolvent;

use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use identities::{
    contour_projection, identity_check_pert2, interlacing_general, interlacing_rank_one, master_equation_roots,
    match_roots, projected_resolvent_form, InterlacingReport, MasterRoot, RootMatch,
};
pub use lanczos::{top_eigenpairs, KrylovOptions, PartialEigen};
pub use resolvent::{resolvent_form, resolvent_form_direct, spectral_projection_form, SpikeResolvent};

/// Which eigensolver a check uses for quantities tied to the top of the
/// spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Full dense symmetric decomposition.
    #[default]
    Dense,
    /// Residual-certified Lanczos on the top few eigenpairs, falling back to
    /// the dense path if certification fails.
    Krylov,
}

/// Eigenvalues sorted nonincreasing with matching orthonormal eigenvectors
/// (as columns), each signed so its largest-magnitude entry is positive.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: Option<Mat<f64>>,
}

impl Eigensystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        let u = self.vectors.as_ref().expect("eigenvectors were not computed");
        linalg::column(u.as_ref(), i)
    }

    /// `<w, u_i>` for every eigenvector.
    pub fn projections(&self, w: &[f64]) -> Vec<f64> {
        let u = self.vectors.as_ref().expect("eigenvectors were not computed");
        (0..u.ncols()).map(|j| linalg::dot_col(u.col(j), w)).collect()
    }
}

/// The spectral data of a spiked matrix and its reference from one draw.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Spectrum of `Q` (or `Q_dot`): `mu`, `xi`.
    pub q: Eigensystem,
    /// Spectrum of `H` (or `H_dot`): `lambda`, `zeta`.
    pub h: Eigensystem,
}

fn check_symmetric(a: MatRef<'_, f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("expected a square matrix, got {n} x {}", a.ncols())));
    }
    let scale = linalg::max_abs(a).max(1.0);
    for j in 0..n {
        for i in j + 1..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Shape(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Full symmetric eigendecomposition, sorted nonincreasing.
pub fn decompose(a: MatRef<'_, f64>) -> Result<Eigensystem> {
    check_symmetric(a)?;
    let n = a.nrows();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let mut vectors = Mat::<f64>::zeros(n, n);
    for (dst, src) in (0..n).rev().enumerate() {
        let col = u.col(src);
        let mut pivot = 0;
        for i in 0..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    Ok(Eigensystem {
        values,
        vectors: Some(vectors),
    })
}

/// Eigenvalues only, sorted nonincreasing.
pub fn eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    v.reverse();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_example() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 3.0][i] } else { 0.0 });
        let e = decompose(a.as_ref()).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vector(0), vec![0.0, 1.0]);
        assert_eq!(e.vector(1), vec![1.0, 0.0]);
    }

    #[test]
    fn identity_example() {
        let e = decompose(Mat::<f64>::identity(4, 4).as_ref()).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reconstruction() {
        let b = Mat::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let a = &b + b.transpose();
        let e = decompose(a.as_ref()).unwrap();
        let u = e.vectors.as_ref().unwrap();
        let mut rec = Mat::<f64>::zeros(5, 5);
        for k in 0..5 {
            for j in 0..5 {
                for i in 0..5 {
                    rec[(i, j)] += e.values[k] * u[(i, k)] * u[(j, k)];
                }
            }
        }
        for j in 0..5 {
            for i in 0..5 {
                assert!((rec[(i, j)] - a[(i, j)]).abs() < 1e-10);
            }
        }
        let vals = eigenvalues(a.as_ref()).unwrap();
        for (x, y) in vals.iter().zip(&e.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        assert!(decompose(a.as_ref()).is_err());
    }
}
