//! Largest singular value of a linear map known only through products with
//! the map and its adjoint.
//!
//! Small maps are materialized and handed to a dense SVD. Larger ones go
//! through Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization; the Ritz value converges to sigma_max from below.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{vec_norm, CMat, C64, ZERO};

pub trait LinearMap: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    fn apply_adjoint(&self, y: &[C64], x: &mut [C64]);
}

/// Row-major dense complex matrix with parallel products.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl DenseMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn to_cmat(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

impl LinearMap for DenseMap {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        });
    }
    fn apply_adjoint(&self, y: &[C64], x: &mut [C64]) {
        // Column-wise accumulation, parallel over column chunks.
        let cols = self.cols;
        x.par_chunks_mut(64).enumerate().for_each(|(chunk, xs)| {
            let j0 = chunk * 64;
            for v in xs.iter_mut() {
                *v = ZERO;
            }
            for (i, yi) in y.iter().enumerate() {
                if *yi == ZERO {
                    continue;
                }
                let row = &self.data[i * cols + j0..i * cols + j0 + xs.len()];
                for (xv, a) in xs.iter_mut().zip(row) {
                    *xv += a.conj() * yi;
                }
            }
        });
    }
}

fn materialize<M: LinearMap + ?Sized>(map: &M) -> CMat {
    let (m, n) = (map.nrows(), map.ncols());
    let mut out = CMat::zeros(m, n);
    let mut e = vec![ZERO; n];
    let mut y = vec![ZERO; m];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        map.apply(&e, &mut y);
        for i in 0..m {
            out[(i, j)] = y[i];
        }
        e[j] = ZERO;
    }
    out
}

const DENSE_LIMIT: usize = 160;

/// sigma_max of `map` to relative tolerance `rtol`.
pub fn spectral_norm<M: LinearMap + ?Sized>(map: &M, rtol: f64) -> f64 {
    let (m, n) = (map.nrows(), map.ncols());
    if m == 0 || n == 0 {
        return 0.0;
    }
    if m.min(n) <= DENSE_LIMIT {
        return super::norm2(&materialize(map));
    }
    lanczos_norm(map, rtol, 400.min(m.min(n)))
}

fn orthogonalize(v: &mut [C64], basis: &[Vec<C64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let proj: C64 = b.iter().zip(v.iter()).map(|(bi, vi)| bi.conj() * vi).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
    }
}

fn bidiag_sigma_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let mut b = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = alphas[i];
        if i + 1 < k {
            b[(i, i + 1)] = betas[i];
        }
    }
    b.singular_values().iter().copied().fold(0.0, f64::max)
}

fn lanczos_norm<M: LinearMap + ?Sized>(map: &M, rtol: f64, max_steps: usize) -> f64 {
    let (m, n) = (map.nrows(), map.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut v: Vec<C64> = (0..n)
        .map(|_| {
            C64::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        })
        .collect();
    let nv = vec_norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);

    let mut vs: Vec<Vec<C64>> = Vec::new();
    let mut us: Vec<Vec<C64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();

    let mut u = vec![ZERO; m];
    map.apply(&v, &mut u);
    let mut alpha = vec_norm(&u);
    if alpha == 0.0 {
        // Start vector landed in the kernel: rotate once and retry.
        v.rotate_left(1);
        map.apply(&v, &mut u);
        alpha = vec_norm(&u);
        if alpha == 0.0 {
            return 0.0;
        }
    }
    u.iter_mut().for_each(|z| *z /= alpha);
    vs.push(v);
    us.push(u);
    alphas.push(alpha);

    let mut last = alpha;
    let mut stable = 0;
    let mut w = vec![ZERO; n];
    let mut p = vec![ZERO; m];
    for step in 1..max_steps {
        map.apply_adjoint(us.last().unwrap(), &mut w);
        let a_prev = *alphas.last().unwrap();
        for (wi, vi) in w.iter_mut().zip(vs.last().unwrap()) {
            *wi -= vi * a_prev;
        }
        orthogonalize(&mut w, &vs);
        let beta = vec_norm(&w);
        if beta <= 1e-14 * last {
            break;
        }
        w.iter_mut().for_each(|z| *z /= beta);
        betas.push(beta);
        map.apply(&w, &mut p);
        for (pi, ui) in p.iter_mut().zip(us.last().unwrap()) {
            *pi -= ui * beta;
        }
        orthogonalize(&mut p, &us);
        let alpha = vec_norm(&p);
        vs.push(w.clone());
        if alpha <= 1e-14 * last {
            alphas.push(0.0);
            break;
        }
        p.iter_mut().for_each(|z| *z /= alpha);
        us.push(p.clone());
        alphas.push(alpha);

        if step % 4 == 0 {
            let est = bidiag_sigma_max(&alphas, &betas[..alphas.len() - 1]);
            if (est - last).abs() <= rtol * est {
                stable += 1;
                if stable >= 2 {
                    return est;
                }
            } else {
                stable = 0;
            }
            last = est;
        }
    }
    let k = alphas.len();
    bidiag_sigma_max(&alphas, &betas[..k.saturating_sub(1).min(betas.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn pseudo_random_dense(rows: usize, cols: usize) -> DenseMap {
        let mut d = DenseMap::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let x = ((i * 7919 + j * 104_729) % 1000) as f64 / 1000.0 - 0.5;
                let y = ((i * 31 + j * 17) % 97) as f64 / 97.0 - 0.5;
                *d.get_mut(i, j) = C64::new(x, y);
            }
        }
        d
    }

    #[test]
    fn lanczos_matches_dense_svd() {
        let d = pseudo_random_dense(300, 250);
        let dense = norm2(&d.to_cmat());
        let est = lanczos_norm(&d, 1e-12, 250);
        assert!((dense - est).abs() <= 1e-9 * dense, "{dense} vs {est}");
    }

    #[test]
    fn adjoint_product_is_consistent() {
        let d = pseudo_random_dense(70, 90);
        let x: Vec<C64> = (0..90).map(|k| C64::new(k as f64, 1.0)).collect();
        let y: Vec<C64> = (0..70).map(|k| C64::new(1.0, -(k as f64))).collect();
        let mut ax = vec![ZERO; 70];
        let mut ahy = vec![ZERO; 90];
        d.apply(&x, &mut ax);
        d.apply_adjoint(&y, &mut ahy);
        let lhs: C64 = y.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum();
        let rhs: C64 = ahy.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
        assert!((lhs - rhs).norm() < 1e-8 * lhs.norm());
    }
}
