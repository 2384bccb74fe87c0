//! Small dense complex linear algebra on top of `nalgebra`.
//!
//! Everything in this crate works with `n x n` complex matrices for tiny `n`
//! (the operator) and with large block matrices that are only ever touched
//! through matrix-vector products (the assembled integral operators).

mod expm;
mod krylov;

pub(crate) use expm::scalar_phi;
pub use expm::{expm, phi_triple, PhiTriple};
pub use krylov::{spectral_norm, DenseMap, LinearMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    // Symmetrize explicitly so rounding in the caller cannot leak into the
    // imaginary part of the diagonal.
    let hs = hermitian_part(h);
    let mut ev: Vec<f64> = SymmetricEigen::new(hs)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_hermitian_eigenvalue(h: &CMat) -> f64 {
    hermitian_eigenvalues(h)[0]
}

/// Largest singular value via dense SVD.
pub fn norm2(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn condition_number(a: &CMat) -> f64 {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or(Error::Singular("matrix inverse"))
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::Singular("linear solve"))
}

/// Eigen-decomposition `A = V diag(values) V^{-1}` of a general complex matrix.
///
/// Built from the complex Schur form `A = Q T Q^*`; eigenvectors of the
/// triangular factor come from back substitution. The returned matrix is not
/// guaranteed to be well conditioned; callers check `condition_number(&v)`.
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: CMat,
}

pub fn eigen_decompose(a: &CMat) -> Result<EigenDecomposition> {
    let n = a.nrows();
    if n == 1 {
        return Ok(EigenDecomposition {
            values: vec![a[(0, 0)]],
            vectors: identity(1),
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigensolver("complex Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = t
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut x = CMat::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in (i + 1)..=k {
                s += t[(i, j)] * x[(j, k)];
            }
            let mut d = t[(i, i)] - t[(k, k)];
            if d.norm() < f64::EPSILON * scale {
                d = c(f64::EPSILON * scale);
            }
            x[(i, k)] = -s / d;
        }
        let nrm = (0..n).map(|i| x[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            x[(i, k)] /= nrm;
        }
    }
    Ok(EigenDecomposition {
        values,
        vectors: q * x,
    })
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    if a.nrows() == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigensolver("complex Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..a.nrows()).map(|i| t[(i, i)]).collect())
}

/// Orthogonal projector onto the column space of `a`.
pub fn range_projector(a: &CMat, rel_tol: f64) -> CMat {
    let n = a.nrows();
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut p = CMat::zeros(n, n);
    if smax == 0.0 {
        return p;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_tol * smax {
            let col = u.column(k);
            p += col * col.adjoint();
        }
    }
    p
}

/// Numerical rank: singular values above `rel_tol` times the largest.
pub fn rank(a: &CMat, rel_tol: f64) -> usize {
    let sv = a.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter()
        .filter(|&&s| smax > 0.0 && s > rel_tol * smax)
        .count()
}

/// Solves `a x + x b = rhs` through the Kronecker system, for small blocks.
pub fn sylvester(a: &CMat, b: &CMat, rhs: &CMat) -> Result<CMat> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut k = CMat::zeros(n * m, n * m);
    // vec(x) is column-major: entry (i, j) sits at j * n + i
    for j in 0..m {
        for i in 0..n {
            let row = j * n + i;
            for l in 0..n {
                k[(row, j * n + l)] += a[(i, l)];
            }
            for l in 0..m {
                k[(row, l * n + i)] += b[(l, j)];
            }
        }
    }
    let v = CMat::from_column_slice(n * m, 1, rhs.as_slice());
    let x = solve(&k, &v)?;
    Ok(CMat::from_column_slice(n, m, x.as_slice()))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn to_cvec(x: &[C64]) -> CVec {
    CVec::from_column_slice(x)
}

pub fn real_matrix(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| c(rows[i][j]))
}
