//! Principal fractional powers of accretive injective matrices and the audit
//! of Kato's inequality `||A^{*a} f|| <= tan(pi (1 + 2a) / 4) ||A^a f||`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operator::Operator;
use crate::quadrature::GaussLegendre;
use crate::rng;

/// Eigenvector matrices with condition number above this go through the
/// resolvent integral instead of the eigen-decomposition.
pub const EIGEN_COND_LIMIT: f64 = 1e8;

fn check_alpha_power(alpha: f64) -> Result<()> {
    if !(alpha.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in [-1, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// `A^alpha` with the principal branch, for accretive injective `A` and
/// `alpha` in `[-1, 1]`.
pub fn frac_power(a: &Operator, alpha: f64) -> Result<Operator> {
    check_alpha_power(alpha)?;
    a.require_accretive_injective()?;
    Operator::new(frac_power_unchecked(a.matrix(), alpha)?)
}

/// Same as [`frac_power`] without the accretivity gate.
pub(crate) fn frac_power_unchecked(a: &CMat, alpha: f64) -> Result<CMat> {
    let n = a.nrows();
    if alpha == 0.0 {
        return Ok(linalg::identity(n));
    }
    if alpha == 1.0 {
        return Ok(a.clone());
    }
    if alpha == -1.0 {
        return linalg::inverse(a);
    }
    if let Some(p) = eigen_power(a, alpha)? {
        return Ok(p);
    }
    if alpha > 0.0 {
        balakrishnan(a, alpha)
    } else {
        linalg::inverse(&balakrishnan(a, -alpha)?)
    }
}

/// `V diag(lambda^alpha) V^{-1}`, or `None` when `V` is ill conditioned.
pub fn eigen_power(a: &CMat, alpha: f64) -> Result<Option<CMat>> {
    let eig = linalg::eigen_decompose(a)?;
    if linalg::condition_number(&eig.vectors) > EIGEN_COND_LIMIT {
        return Ok(None);
    }
    let v_inv = linalg::inverse(&eig.vectors)?;
    let d = CMat::from_diagonal(&linalg::CVec::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|l| l.powf(alpha)),
    ));
    Ok(Some(&eig.vectors * d * v_inv))
}

const PANELS_PER_DECADE: usize = 8;
const POINTS_PER_PANEL: usize = 8;

/// `A^alpha = (sin(pi alpha)/pi) int_0^inf s^{alpha-1} (s + A)^{-1} A ds`
/// for `alpha` in `(0, 1)`. Composite Gauss-Legendre in `log s` with 64
/// points per decade on `[1e-8 rho, 1e8 rho]`; the two truncated ends are
/// added back from the first two terms of their power series.
pub fn balakrishnan(a: &CMat, alpha: f64) -> Result<CMat> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "resolvent integral needs alpha in (0, 1), got {alpha}"
        )));
    }
    let n = a.nrows();
    let eye = linalg::identity(n);
    let a_inv = linalg::inverse(a)?;
    let rho = linalg::eigenvalues(a)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    let a_norm = linalg::norm2(a);
    let inv_norm = linalg::norm2(&a_inv);
    // Ends are chosen so the series below converge quickly.
    let s0 = (1e-8 * rho).min(1e-4 / inv_norm);
    let s1 = (1e8 * rho).max(1e4 * a_norm);

    let rule = GaussLegendre::new(POINTS_PER_PANEL);
    let (l0, l1) = (s0.ln(), s1.ln());
    let panels = (((s1 / s0).log10() * PANELS_PER_DECADE as f64).ceil() as usize).max(1);
    let h = (l1 - l0) / panels as f64;
    let mut acc = CMat::zeros(n, n);
    for k in 0..panels {
        let (x0, x1) = (l0 + h * k as f64, l0 + h * (k + 1) as f64);
        let mut err = None;
        rule.for_each(x0, x1, |x, w| {
            if err.is_some() {
                return;
            }
            let s = x.exp();
            let shifted = a + &eye * linalg::c(s);
            match linalg::solve(&shifted, a) {
                Ok(r) => acc += r * linalg::c(w * s.powf(alpha)),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    // (s + A)^{-1} A = I - s A^{-1} + ...  near 0
    let lower = &eye * linalg::c(s0.powf(alpha) / alpha)
        - &a_inv * linalg::c(s0.powf(alpha + 1.0) / (alpha + 1.0));
    // (s + A)^{-1} A = A/s - A^2/s^2 + ...  near infinity
    let upper = a * linalg::c(s1.powf(alpha - 1.0) / (1.0 - alpha))
        - (a * a) * linalg::c(s1.powf(alpha - 2.0) / (2.0 - alpha));
    Ok((acc + lower + upper) * linalg::c((PI * alpha).sin() / PI))
}

/// `tan(pi (1 + 2 alpha) / 4)`.
pub fn kato_bound(alpha: f64) -> f64 {
    (PI * (1.0 + 2.0 * alpha) / 4.0).tan()
}

fn check_alpha_kato(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1/2), got {alpha}"
        )));
    }
    Ok(())
}

/// `||A^{*alpha} f|| / ||A^alpha f||`.
pub fn kato_ratio(a: &Operator, alpha: f64, f: &linalg::CVec) -> Result<f64> {
    check_alpha_kato(alpha)?;
    a.require_accretive_injective()?;
    let p = frac_power_unchecked(a.matrix(), alpha)?;
    let q = frac_power_unchecked(a.adjoint_matrix(), alpha)?;
    ratio(&p, &q, f)
}

fn ratio(p: &CMat, q: &CMat, f: &linalg::CVec) -> Result<f64> {
    let den = (p * f).norm();
    if !(den > 1e-14) {
        return Err(Error::Degenerate(format!("||A^alpha f|| = {den:e}")));
    }
    Ok((q * f).norm() / den)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KatoReport {
    pub alpha: f64,
    pub bound: f64,
    pub worst_ratio: f64,
    /// Worst `||A^alpha f|| / ||A^{*alpha} f||`, the same inequality for `A^*`.
    pub worst_mirrored: f64,
    pub num_samples: usize,
    pub pass: bool,
}

impl KatoReport {
    fn new(alpha: f64, worst_ratio: f64, worst_mirrored: f64, num_samples: usize) -> Self {
        let bound = kato_bound(alpha);
        Self {
            alpha,
            bound,
            worst_ratio,
            worst_mirrored,
            num_samples,
            pass: worst_ratio <= bound * (1.0 + 1e-8),
        }
    }

    /// Combines two reports for the same alpha (e.g. over several matrices).
    pub fn merge(&self, other: &KatoReport) -> KatoReport {
        assert_eq!(self.alpha, other.alpha);
        KatoReport::new(
            self.alpha,
            self.worst_ratio.max(other.worst_ratio),
            self.worst_mirrored.max(other.worst_mirrored),
            self.num_samples + other.num_samples,
        )
    }
}

/// For every alpha, the worst Kato ratio over `samples` unit vectors drawn
/// from per-cell seeds `seed ^ hash(alpha index, sample index)`.
pub fn kato_audit(
    a: &Operator,
    alphas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<KatoReport>> {
    for &alpha in alphas {
        check_alpha_kato(alpha).map_err(|e| Error::AtAlpha {
            alpha,
            source: Box::new(e),
        })?;
    }
    a.require_accretive_injective()?;
    let n = a.dim();
    alphas
        .iter()
        .enumerate()
        .map(|(ia, &alpha)| {
            let at = |e: Error| Error::AtAlpha {
                alpha,
                source: Box::new(e),
            };
            let p = frac_power_unchecked(a.matrix(), alpha).map_err(at)?;
            let q = frac_power_unchecked(a.adjoint_matrix(), alpha).map_err(at)?;
            let (worst, worst_m) = (0..samples)
                .into_par_iter()
                .map(|k| {
                    let mut r = rng::seeded(rng::cell_seed(seed, ia as u64, k as u64));
                    let f = rng::unit_vector(&mut r, n);
                    let pf = (&p * &f).norm();
                    let qf = (&q * &f).norm();
                    (qf / pf, pf / qf)
                })
                .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
            Ok(KatoReport::new(alpha, worst, worst_m, samples))
        })
        .collect()
}

pub fn kato_csv(reports: &[KatoReport]) -> String {
    use crate::report::fmt;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                fmt(r.alpha),
                fmt(r.bound),
                fmt(r.worst_ratio),
                r.num_samples.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect();
    crate::report::csv_table(
        &["alpha", "bound", "worst_ratio", "num_samples", "pass"],
        &rows,
    )
}

/// `||A^alpha (A^*)^{-alpha}||` for `alpha` in `(-1/2, 1/2)`.
pub fn similarity_norm(a: &Operator, alpha: f64) -> Result<f64> {
    if !(alpha.abs() < 0.5) {
        return Err(Error::Domain(format!(
            "alpha must lie in (-1/2, 1/2), got {alpha}"
        )));
    }
    a.require_accretive_injective()?;
    let p = frac_power_unchecked(a.matrix(), alpha)?;
    let q = frac_power_unchecked(a.adjoint_matrix(), -alpha)?;
    Ok(linalg::norm2(&(p * q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff, real_matrix, CVec, C64};
    use crate::operator::random_accretive;

    fn rel(a: &CMat, b: &CMat) -> f64 {
        max_abs_diff(a, b) / linalg::norm2(b)
    }

    #[test]
    fn frac_power_examples() {
        let i = Operator::identity(3);
        assert!(max_abs_diff(frac_power(&i, 0.5).unwrap().matrix(), &linalg::identity(3)) < 1e-14);

        let d = Operator::diagonal(&[4.0, 9.0]);
        let r = frac_power(&d, 0.5).unwrap();
        assert!(max_abs_diff(r.matrix(), &real_matrix(&[&[2.0, 0.0], &[0.0, 3.0]])) < 1e-14);

        let j = Operator::from_real(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let r = frac_power(&j, 0.5).unwrap();
        assert!(rel(&(r.matrix() * r.matrix()), j.matrix()) < 1e-8);
    }

    #[test]
    fn frac_power_gates() {
        let a = Operator::from_real(&[&[2.0]]).unwrap();
        assert!(frac_power(&a, 1.5).is_err());
        let neg = Operator::from_real(&[&[-1.0]]).unwrap();
        assert!(matches!(
            frac_power(&neg, 0.5),
            Err(Error::NotAccretive { .. })
        ));
        let sing = Operator::diagonal(&[1.0, 0.0]);
        assert!(matches!(
            frac_power(&sing, 0.5),
            Err(Error::NotInjective { .. })
        ));
    }

    #[test]
    fn integer_endpoints() {
        let a = random_accretive(3, 0.3, 4).unwrap();
        let p1 = frac_power(&a, 1.0).unwrap();
        assert_eq!(p1.matrix(), a.matrix());
        let pm1 = frac_power(&a, -1.0).unwrap();
        assert!(rel(&(pm1.matrix() * a.matrix()), &linalg::identity(3)) < 1e-9);
        // resolvent path near the endpoints
        let near = balakrishnan(a.matrix(), 0.999).unwrap();
        assert!(rel(&near, a.matrix()) < 5e-3);
    }

    #[test]
    fn eigen_and_resolvent_paths_agree() {
        for seed in 0..5 {
            let a = random_accretive(3, 0.2, seed).unwrap();
            for alpha in [0.1, 0.25, 0.5, 0.8] {
                let e = eigen_power(a.matrix(), alpha).unwrap().unwrap();
                let b = balakrishnan(a.matrix(), alpha).unwrap();
                assert!(
                    rel(&b, &e) < 1e-6,
                    "seed {seed} alpha {alpha}: {}",
                    rel(&b, &e)
                );
            }
        }
    }

    #[test]
    fn defective_matrix_uses_resolvent_path() {
        let j = real_matrix(&[&[2.0, 1.0, 0.0], &[0.0, 2.0, 1.0], &[0.0, 0.0, 2.0]]);
        assert!(eigen_power(&j, 0.5).unwrap().is_none());
        let r = frac_power_unchecked(&j, 0.5).unwrap();
        assert!(rel(&(&r * &r), &j) < 1e-8);
        // closed form: sqrt(2) [1, 1/4, -1/32 ... ] scaled by nilpotent powers
        let s = 2f64.sqrt();
        assert!((r[(0, 1)].re - s / 4.0).abs() < 1e-9);
        assert!((r[(0, 2)].re + s / 32.0).abs() < 1e-9);
    }

    #[test]
    fn group_law() {
        let a = random_accretive(4, 0.1, 17).unwrap();
        let pairs = [(0.3, 0.4), (-0.2, 0.7), (0.5, -0.9), (-0.4, -0.5)];
        for (x, y) in pairs {
            let px = frac_power(&a, x).unwrap();
            let py = frac_power(&a, y).unwrap();
            let pxy = frac_power(&a, x + y).unwrap();
            assert!(rel(&(px.matrix() * py.matrix()), pxy.matrix()) < 1e-7);
        }
    }

    #[test]
    fn kato_bound_values() {
        assert!((kato_bound(0.0) - 1.0).abs() < 1e-15);
        assert!((kato_bound(0.25) - 2.414_213_562_373_095).abs() < 1e-13);
        assert!((kato_bound(0.49) - 63.656_741_162_873_99).abs() < 1e-9);
    }

    #[test]
    fn kato_ratio_examples() {
        let h = Operator::from_real(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        let f = CVec::from_vec(vec![c(1.0), C64::new(0.3, -2.0)]);
        assert!((kato_ratio(&h, 0.3, &f).unwrap() - 1.0).abs() < 1e-12);

        let a = random_accretive(3, 0.1, 42).unwrap();
        let mut r = rng::seeded(0);
        for _ in 0..100 {
            let f = rng::unit_vector(&mut r, 3);
            assert!(kato_ratio(&a, 0.25, &f).unwrap() <= kato_bound(0.25));
        }
        assert!(kato_ratio(&a, 0.5, &f).is_err());
    }

    #[test]
    fn kato_audit_examples() {
        let h = Operator::from_real(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        for rep in kato_audit(&h, &[0.1, 0.4], 50, 1).unwrap() {
            assert!(rep.pass);
            assert!((rep.worst_ratio - 1.0).abs() < 1e-9);
        }
        let a = random_accretive(3, 0.0, 8).unwrap();
        let reps = kato_audit(&a, &[0.49], 200, 3).unwrap();
        assert!((reps[0].bound - 63.657).abs() < 1e-3);
        assert!(reps[0].pass);
        assert_eq!(reps, kato_audit(&a, &[0.49], 200, 3).unwrap());

        let neg = Operator::from_real(&[&[-1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!(kato_audit(&neg, &[0.2], 10, 0).is_err());
        assert!(
            matches!(kato_audit(&a, &[0.2, 0.7], 10, 0), Err(Error::AtAlpha { alpha, .. }) if alpha == 0.7)
        );
    }

    #[test]
    fn similarity_norm_examples() {
        let a = random_accretive(2, 0.1, 1).unwrap();
        assert!((similarity_norm(&a, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let h = Operator::from_real(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        for alpha in [-0.4, 0.1, 0.3] {
            assert!((similarity_norm(&h, alpha).unwrap() - 1.0).abs() < 1e-10);
        }
        for alpha in [-0.3, 0.3] {
            let s = similarity_norm(&a, alpha).unwrap();
            assert!(s.is_finite() && s >= 1.0 - 1e-12);
        }
    }
}
