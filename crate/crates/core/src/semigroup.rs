//! The semigroup `e^{-zA}` and the analyticity estimates built on it.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use parking_lot::RwLock;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, expm, phi_triple, CMat, CVec, PhiTriple, C64};
use crate::operator::Operator;
use crate::timegrid::TimeGrid;

/// `e^{-zA}`, optionally with `A e^{-zA}`.
#[derive(Clone, Debug)]
pub struct SemigroupSample {
    pub z: C64,
    pub value: CMat,
    pub derivative_value: Option<CMat>,
}

fn check_time(z: C64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("non-finite time {z}")));
    }
    if z.re < 0.0 || (z.re == 0.0 && z.im != 0.0) {
        return Err(Error::Domain(format!(
            "semigroup time must satisfy Re z > 0 or z = 0, got {z}"
        )));
    }
    Ok(())
}

/// `e^{-zA}` for `Re z > 0` or `z = 0`.
pub fn expm_neg(a: &Operator, z: C64) -> Result<CMat> {
    check_time(z)?;
    if z == linalg::ZERO {
        return Ok(linalg::identity(a.dim()));
    }
    if a.is_hermitian() {
        return Ok(hermitian_function(a.matrix(), |l| (-z * l).exp()));
    }
    Ok(expm_neg_general(a.matrix(), z))
}

/// The Padé path, without the Hermitian shortcut.
pub fn expm_neg_general(a: &CMat, z: C64) -> CMat {
    expm(&a.map(|x| -z * x))
}

/// `V diag(f(lambda)) V^*` for Hermitian `h`.
pub(crate) fn hermitian_function(h: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let eig = SymmetricEigen::new(linalg::hermitian_part(h));
    let v = &eig.eigenvectors;
    let d = CMat::from_diagonal(&CVec::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| f(l)),
    ));
    v * d * v.adjoint()
}

pub fn sample(a: &Operator, z: C64, with_derivative: bool) -> Result<SemigroupSample> {
    let value = expm_neg(a, z)?;
    let derivative_value = with_derivative.then(|| a.matrix() * &value);
    Ok(SemigroupSample {
        z,
        value,
        derivative_value,
    })
}

/// Memoizing evaluator of `e^{-tA}` and of the phi-function triple for real
/// `t >= 0`. Safe to share between threads.
pub struct Semigroup {
    a: CMat,
    hermitian: Option<(Vec<f64>, CMat)>,
    exp_cache: RwLock<HashMap<u64, Arc<CMat>>>,
    triple_cache: RwLock<HashMap<u64, Arc<PhiTriple>>>,
}

impl Semigroup {
    pub fn new(a: &Operator) -> Self {
        Self::from_matrix(a.matrix().clone(), a.is_hermitian())
    }

    pub fn from_matrix(a: CMat, hermitian: bool) -> Self {
        let hermitian = hermitian.then(|| {
            let eig = SymmetricEigen::new(linalg::hermitian_part(&a));
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        });
        Self {
            a,
            hermitian,
            exp_cache: RwLock::new(HashMap::new()),
            triple_cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn diag_apply(&self, f: impl Fn(f64) -> C64) -> Option<CMat> {
        let (l, v) = self.hermitian.as_ref()?;
        let d = CMat::from_diagonal(&CVec::from_iterator(l.len(), l.iter().map(|&x| f(x))));
        Some(v * d * v.adjoint())
    }

    /// `e^{-tA}`, `t >= 0`.
    pub fn exp(&self, t: f64) -> Arc<CMat> {
        debug_assert!(t >= 0.0);
        let key = t.to_bits();
        if let Some(m) = self.exp_cache.read().get(&key) {
            return m.clone();
        }
        let m = Arc::new(if t == 0.0 {
            linalg::identity(self.dim())
        } else {
            self.diag_apply(|l| (-t * l).exp().into())
                .unwrap_or_else(|| expm_neg_general(&self.a, linalg::c(t)))
        });
        self.exp_cache.write().entry(key).or_insert(m).clone()
    }

    /// `e^{-tA}` without touching the cache, for one-off quadrature points.
    pub fn exp_uncached(&self, t: f64) -> CMat {
        if t == 0.0 {
            return linalg::identity(self.dim());
        }
        self.diag_apply(|l| (-t * l).exp().into())
            .unwrap_or_else(|| expm_neg_general(&self.a, linalg::c(t)))
    }

    /// `A e^{-tA}`.
    pub fn generator_exp(&self, t: f64) -> CMat {
        &self.a * &*self.exp(t)
    }

    /// `(e^{-xA}, phi1(-xA), phi2(-xA))`, `x >= 0`.
    pub fn triple(&self, x: f64) -> Arc<PhiTriple> {
        debug_assert!(x >= 0.0);
        let key = x.to_bits();
        if let Some(p) = self.triple_cache.read().get(&key) {
            return p.clone();
        }
        let p = Arc::new(match &self.hermitian {
            Some(_) => {
                let f = |k: usize| {
                    move |l: f64| {
                        let (e, p1, p2) = linalg::scalar_phi(linalg::c(-x * l));
                        [e, p1, p2][k]
                    }
                };
                PhiTriple {
                    exp: self.diag_apply(f(0)).unwrap(),
                    phi1: self.diag_apply(f(1)).unwrap(),
                    phi2: self.diag_apply(f(2)).unwrap(),
                }
            }
            None => phi_triple(&self.a, x),
        });
        self.triple_cache.write().entry(key).or_insert(p).clone()
    }

    /// `int_0^x e^{-yA} dy`.
    pub fn integral(&self, x: f64) -> CMat {
        self.triple(x).phi1.map(|z| z * x)
    }

    /// `int_0^x A e^{-yA} dy = I - e^{-xA}`, computed as `A x phi1(-xA)`.
    pub fn generator_integral(&self, x: f64) -> CMat {
        &self.a * self.integral(x)
    }
}

/// `sup_t t ||A e^{-tA}||` over the grid nodes.
pub fn analyticity_constant(a: &Operator, grid: &TimeGrid) -> f64 {
    let sg = Semigroup::new(a);
    grid.nodes()
        .iter()
        .map(|&t| t * linalg::norm2(&sg.generator_exp(t)))
        .fold(0.0, f64::max)
}

/// `sup_t ||e^{-tA}||` over the grid nodes and `t = 0`.
pub fn semigroup_bound(a: &Operator, grid: &TimeGrid) -> f64 {
    let sg = Semigroup::new(a);
    grid.nodes()
        .iter()
        .map(|&t| linalg::norm2(&sg.exp(t)))
        .fold(1.0, f64::max)
}

/// `||e^{-z1 A} e^{-z2 A} - e^{-(z1+z2)A}|| / (1 + ||e^{-(z1+z2)A}||)`.
pub fn semigroup_law_defect(a: &Operator, z1: C64, z2: C64) -> Result<f64> {
    let e1 = expm_neg(a, z1)?;
    let e2 = expm_neg(a, z2)?;
    let e12 = expm_neg(a, z1 + z2)?;
    Ok(linalg::norm2(&(&e1 * &e2 - &e12)) / (1.0 + linalg::norm2(&e12)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticEstimate {
    /// `(int_0^inf ||s A e^{-sA} h||^2 ds/s)^{1/2}`.
    pub value: f64,
    /// Estimated share of the integral below the first node.
    pub head: f64,
    /// Estimated share above the last node (infinite if not decaying).
    pub tail: f64,
    pub converged: bool,
}

pub const QE_SPAN: (f64, f64) = (1e-6, 1e6);
pub const QE_PER_DECADE: usize = 96;

pub fn default_qe_grid() -> TimeGrid {
    TimeGrid::log_grid_per_decade(QE_SPAN.0, QE_SPAN.1, QE_PER_DECADE)
        .expect("static grid parameters are valid")
}

/// Log-trapezoid quadrature of `int ||s A e^{-sA} h||^2 ds/s` on the nodes of
/// `grid`, with head and tail estimates from the local power-law behavior.
pub fn quadratic_estimate(a: &Operator, h: &CVec, grid: &TimeGrid) -> Result<QuadraticEstimate> {
    if h.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: h.len(),
        });
    }
    let sg = Semigroup::new(a);
    let s = grid.nodes();
    let g: Vec<f64> = s
        .iter()
        .map(|&t| {
            let v = sg.generator_exp(t) * h;
            t * t * v.norm_squared()
        })
        .collect();
    let n = s.len();
    let interior: f64 = (0..n - 1)
        .map(|k| 0.5 * (g[k] + g[k + 1]) * (s[k + 1] / s[k]).ln())
        .sum();
    if interior == 0.0 && g.iter().all(|&x| x == 0.0) {
        return Ok(QuadraticEstimate {
            value: 0.0,
            head: 0.0,
            tail: 0.0,
            converged: true,
        });
    }
    // g ~ s^2 ||Ah||^2 near 0, so the missing head is about g(s_0)/2.
    let head = 0.5 * g[0];
    let tail = if g[n - 1] == 0.0 {
        0.0
    } else if g[n - 2] > 0.0 {
        let p = (g[n - 1] / g[n - 2]).ln() / (s[n - 1] / s[n - 2]).ln();
        if p < -1e-3 {
            g[n - 1] / -p
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    };
    let total = interior + head + tail;
    let converged = tail.is_finite() && head + tail <= 1e-8 * total;
    Ok(QuadraticEstimate {
        value: if tail.is_finite() {
            total.sqrt()
        } else {
            f64::INFINITY
        },
        head,
        tail,
        converged,
    })
}

/// CSV rows `t, ||e^{-tA}||, t ||A e^{-tA}||`.
pub fn profile_csv(a: &Operator, grid: &TimeGrid) -> String {
    let sg = Semigroup::new(a);
    let mut s = String::from("t,norm_exp,t_norm_generator_exp\n");
    for &t in grid.nodes() {
        let e = sg.exp(t);
        s.push_str(&format!(
            "{},{},{}\n",
            crate::report::fmt(t),
            crate::report::fmt(linalg::norm2(&e)),
            crate::report::fmt(t * linalg::norm2(&(a.matrix() * &*e)))
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff, real_matrix};
    use crate::operator::random_accretive;

    #[test]
    fn identity_at_zero_and_domain_errors() {
        let a = Operator::from_real(&[&[1.0, 2.0], &[0.0, 3.0]]).unwrap();
        assert_eq!(expm_neg(&a, c(0.0)).unwrap(), linalg::identity(2));
        assert!(expm_neg(&a, c(-1.0)).is_err());
        assert!(expm_neg(&a, C64::new(0.0, 1.0)).is_err());
        assert!(expm_neg(&a, C64::new(1.0, 5.0)).is_ok());
    }

    #[test]
    fn scalar_value() {
        let a = Operator::from_real(&[&[1.0]]).unwrap();
        let e = expm_neg(&a, c(1.0)).unwrap();
        assert!((e[(0, 0)].re - 0.367_879_441_171_442_33).abs() < 1e-16);
    }

    #[test]
    fn jordan_block_closed_form() {
        let a = Operator::from_real(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        for t in [0.1, 1.0, 3.7, 20.0] {
            let e = expm_neg(&a, c(t)).unwrap();
            let expected = real_matrix(&[&[1.0, -t], &[0.0, 1.0]]).map(|z| z * (-t).exp());
            assert!(max_abs_diff(&e, &expected) < 1e-14 * (1.0 + t));
        }
    }

    #[test]
    fn hermitian_fast_path_agrees() {
        let h =
            Operator::from_real(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 0.5], &[0.0, 0.5, 1.0]]).unwrap();
        for t in [0.01, 0.5, 2.0, 10.0] {
            let fast = expm_neg(&h, c(t)).unwrap();
            let slow = expm_neg_general(h.matrix(), c(t));
            assert!(max_abs_diff(&fast, &slow) < 1e-10);
        }
    }

    #[test]
    fn semigroup_law_on_random_pairs() {
        let mut rng = crate::rng::seeded(11);
        use rand::Rng;
        for seed in 0..3 {
            let a = random_accretive(3, 0.1, seed).unwrap();
            for _ in 0..100 {
                let t1: f64 = rng.random_range(0.0..3.0);
                let t2: f64 = rng.random_range(0.0..3.0);
                let d = semigroup_law_defect(&a, c(t1), c(t2)).unwrap();
                assert!(d <= 1e-9, "{d}");
            }
        }
    }

    #[test]
    fn cached_triple_matches_direct() {
        let a = Operator::from_real(&[&[1.0, 4.0], &[0.0, 2.0]]).unwrap();
        let sg = Semigroup::new(&a);
        let t1 = sg.triple(0.3);
        let t2 = sg.triple(0.3);
        assert!(Arc::ptr_eq(&t1, &t2));
        let direct = phi_triple(a.matrix(), 0.3);
        assert!(max_abs_diff(&t1.phi1, &direct.phi1) < 1e-15);
        // I - e^{-xA} = A int_0^x e^{-yA} dy
        let lhs = sg.generator_integral(0.3);
        let rhs = linalg::identity(2) - &*sg.exp(0.3);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-14);
    }

    #[test]
    fn hermitian_triple_matches_block_exponential() {
        let h = Operator::from_real(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        let sg = Semigroup::new(&h);
        for x in [1e-6, 0.2, 5.0] {
            let fast = sg.triple(x);
            let slow = phi_triple(h.matrix(), x);
            assert!(max_abs_diff(&fast.phi1, &slow.phi1) < 1e-12);
            assert!(max_abs_diff(&fast.phi2, &slow.phi2) < 1e-12);
        }
    }

    #[test]
    fn analyticity_constant_examples() {
        let g = TimeGrid::log_grid(1e-3, 1e3, 6001).unwrap();
        for lambda in [0.5, 1.0, 7.0] {
            let a = Operator::from_real(&[&[lambda]]).unwrap();
            let k = analyticity_constant(&a, &g);
            assert!((k - (-1.0f64).exp()).abs() < 1e-6, "{k}");
        }
        let zero = Operator::from_real(&[&[0.0]]).unwrap();
        assert_eq!(analyticity_constant(&zero, &g), 0.0);

        let a = Operator::from_real(&[&[1.0, 10.0], &[0.0, 1.0]]).unwrap();
        let coarse = analyticity_constant(&a, &TimeGrid::log_grid(1e-3, 1e3, 200).unwrap());
        let fine = analyticity_constant(&a, &TimeGrid::log_grid(1e-3, 1e3, 10_000).unwrap());
        assert!(fine.is_finite() && fine > (-1.0f64).exp());
        assert!(fine >= coarse - 1e-9);
    }

    #[test]
    fn strong_continuity_at_zero() {
        let a = random_accretive(3, 0.2, 5).unwrap();
        let h = crate::rng::unit_vector(&mut crate::rng::seeded(1), 3);
        let g = TimeGrid::log_grid(1e-8, 1e-2, 60).unwrap();
        let sg = Semigroup::new(&a);
        let d: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&t| (&*sg.exp(t) * &h - &h).norm())
            .collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert!(d[0] < 1e-7);
    }

    #[test]
    fn quadratic_estimate_examples() {
        let grid = default_qe_grid();
        let a = Operator::from_real(&[&[1.0]]).unwrap();
        let zero = CVec::zeros(1);
        assert_eq!(quadratic_estimate(&a, &zero, &grid).unwrap().value, 0.0);
        for lambda in [1e-2, 1.0, 30.0] {
            let a = Operator::from_real(&[&[lambda]]).unwrap();
            let q = quadratic_estimate(&a, &CVec::from_element(1, c(1.0)), &grid).unwrap();
            assert!(q.converged);
            assert!((q.value - 0.5).abs() < 1e-8, "{lambda}: {}", q.value);
        }
        let h = Operator::from_real(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let eigvec = CVec::from_vec(vec![c(s), c(-s)]);
        let q = quadratic_estimate(&h, &eigvec, &grid).unwrap();
        assert!((q.value - 0.5).abs() < 1e-8);
    }

    #[test]
    fn quadratic_estimate_flags_non_sectorial() {
        let skew = Operator::from_real(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        let h = CVec::from_vec(vec![c(1.0), c(0.0)]);
        let q = quadratic_estimate(&skew, &h, &default_qe_grid()).unwrap();
        assert!(!q.converged);
    }

    #[test]
    fn quadratic_estimate_uniform_constant_for_hermitian() {
        let h =
            Operator::from_real(&[&[5.0, 1.0, 0.0], &[1.0, 0.3, 0.2], &[0.0, 0.2, 40.0]]).unwrap();
        let grid = default_qe_grid();
        let mut rng = crate::rng::seeded(9);
        for _ in 0..100 {
            let v = crate::rng::unit_vector(&mut rng, 3);
            let q = quadratic_estimate(&h, &v, &grid).unwrap();
            // orthogonal eigen-components each contribute 1/4
            assert!((q.value - 0.5).abs() < 1e-7);
        }
    }
}
