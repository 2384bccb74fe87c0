//! The finite-dimensional operator `A` on `H = C^n` that plays the role of the
//! semigroup generator, together with its spectral diagnostics.
//!
//! In finite dimension the domain of `A` is all of `H`, so statements about
//! domains, density and closedness are vacuous here.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, hermitian_eigenvalues, CMat, C64};
use crate::rng;

/// Provenance recorded alongside generated operators.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

/// Dense `n x n` complex matrix with its conjugate transpose cached eagerly.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    entries: CMat,
    adjoint: CMat,
    pub meta: OperatorMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralInfo {
    pub eigenvalues: Vec<C64>,
    /// Smallest eigenvalue of the Hermitian part `(A + A^*)/2`.
    pub accretivity_margin: f64,
    /// Half-angle of the smallest sector about the positive real axis
    /// containing the numerical range.
    pub sector_angle: f64,
    pub is_injective: bool,
}

impl SpectralInfo {
    pub fn is_accretive(&self, tol: f64) -> bool {
        self.accretivity_margin >= -tol
    }

    /// `sector_angle < pi/2`, resolved to the angle-search precision.
    pub fn is_analytic_generator(&self) -> bool {
        self.sector_angle < FRAC_PI_2 - SECTOR_GATE_SLACK
    }
}

/// Default tolerance for spectral gates.
pub const SPECTRAL_TOL: f64 = 1e-10;

const SECTOR_SAMPLES: usize = 1024;
const SECTOR_BISECTION_TOL: f64 = 1e-8;
const SECTOR_GATE_SLACK: f64 = 10.0 * SECTOR_BISECTION_TOL;

impl Operator {
    pub fn new(entries: CMat) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(Error::EmptyOperator);
        }
        for i in 0..entries.nrows() {
            for j in 0..entries.ncols() {
                let z = entries[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        let adjoint = entries.adjoint();
        Ok(Self {
            entries,
            adjoint,
            meta: OperatorMeta::default(),
        })
    }

    /// Builds from row-major real and imaginary parts.
    pub fn from_parts(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<Self> {
        let rows = re.len();
        for r in re {
            if r.len() != rows {
                return Err(Error::NotSquare {
                    rows,
                    cols: r.len(),
                });
            }
        }
        if let Some(im) = im {
            if im.len() != rows || im.iter().any(|r| r.len() != rows) {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: im.len(),
                });
            }
        }
        let m = CMat::from_fn(rows, rows, |i, j| {
            C64::new(re[i][j], im.map_or(0.0, |im| im[i][j]))
        });
        Self::new(m)
    }

    pub fn from_real(rows: &[&[f64]]) -> Result<Self> {
        let re: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Self::from_parts(&re, None)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(linalg::identity(n)).expect("identity is valid")
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::new(CMat::from_fn(n, n, |i, j| {
            if i == j {
                linalg::c(values[i])
            } else {
                linalg::ZERO
            }
        }))
        .expect("finite diagonal")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.entries
    }

    pub fn adjoint_matrix(&self) -> &CMat {
        &self.adjoint
    }

    /// The conjugate transpose as an operator.
    pub fn adjoint(&self) -> Operator {
        Operator {
            entries: self.adjoint.clone(),
            adjoint: self.entries.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.entries == self.adjoint
    }

    /// Largest singular value.
    pub fn norm(&self) -> f64 {
        linalg::norm2(&self.entries)
    }

    pub fn with_meta(mut self, meta: OperatorMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn spectral_info(&self, tol: f64) -> Result<SpectralInfo> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let eigenvalues = linalg::eigenvalues(&self.entries)?;
        let accretivity_margin = hermitian_eigenvalues(&linalg::hermitian_part(&self.entries))[0];
        let sector_angle = if accretivity_margin >= -tol {
            FRAC_PI_2 - self.analyticity_half_angle(tol)
        } else {
            self.numerical_range_max_arg()
        };
        let scale = self.norm();
        let is_injective = scale > 0.0 && eigenvalues.iter().all(|l| l.norm() > 1e-10 * scale);
        Ok(SpectralInfo {
            eigenvalues,
            accretivity_margin,
            sector_angle,
            is_injective,
        })
    }

    /// Smallest eigenvalue of the Hermitian part of `e^{i theta} A`.
    fn rotated_margin(&self, theta: f64) -> f64 {
        let rot = self.entries.map(|z| z * C64::from_polar(1.0, theta));
        hermitian_eigenvalues(&linalg::hermitian_part(&rot))[0]
    }

    /// Largest delta in [0, pi/2] with `Re(e^{i theta} A x, x) >= -tol` for
    /// every |theta| <= delta.
    fn analyticity_half_angle(&self, tol: f64) -> f64 {
        let one_side = |sign: f64| {
            let step = FRAC_PI_2 / SECTOR_SAMPLES as f64;
            let mut ok = 0.0;
            for k in 1..=SECTOR_SAMPLES {
                let theta = k as f64 * step;
                if self.rotated_margin(sign * theta) < -tol {
                    let (mut lo, mut hi) = (ok, theta);
                    while hi - lo > SECTOR_BISECTION_TOL {
                        let mid = 0.5 * (lo + hi);
                        if self.rotated_margin(sign * mid) < -tol {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return lo;
                }
                ok = theta;
            }
            FRAC_PI_2
        };
        one_side(1.0).min(one_side(-1.0))
    }

    /// Largest |arg z| over the numerical range, or pi when the range
    /// surrounds the origin.
    fn numerical_range_max_arg(&self) -> f64 {
        let mut max_arg: f64 = 0.0;
        let mut surrounds = true;
        for k in 0..SECTOR_SAMPLES {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / SECTOR_SAMPLES as f64;
            let rot = self.entries.map(|z| z * C64::from_polar(1.0, -phi));
            let herm = linalg::hermitian_part(&rot);
            let eig = nalgebra::SymmetricEigen::new(herm);
            let (imax, &lmax) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty");
            if lmax <= 0.0 {
                surrounds = false;
            }
            let x = eig.eigenvectors.column(imax);
            let z = (x.adjoint() * &self.entries * x)[(0, 0)];
            if z.norm() > 0.0 {
                max_arg = max_arg.max(z.arg().abs());
            }
        }
        if surrounds {
            std::f64::consts::PI
        } else {
            max_arg
        }
    }

    /// Returns an error unless the numerical range lies in a sector of
    /// half-angle below pi/2.
    pub fn require_analytic_generator(&self) -> Result<SpectralInfo> {
        let info = self.spectral_info(SPECTRAL_TOL)?;
        if !info.is_analytic_generator() {
            return Err(Error::NotSectorial {
                sector_angle: info.sector_angle,
            });
        }
        Ok(info)
    }

    pub fn require_accretive_injective(&self) -> Result<SpectralInfo> {
        let info = self.spectral_info(SPECTRAL_TOL)?;
        if !info.is_accretive(SPECTRAL_TOL) {
            return Err(Error::NotAccretive {
                margin: info.accretivity_margin,
            });
        }
        if !info.is_injective {
            let smallest = info
                .eigenvalues
                .iter()
                .map(|l| l.norm())
                .fold(f64::INFINITY, f64::min);
            return Err(Error::NotInjective { smallest });
        }
        Ok(info)
    }
}

/// Draws `B + margin I` with `B = S + K`, `S = G G^* / n` Hermitian positive
/// semidefinite and `K` skew-Hermitian, from a generator seeded by `seed`.
pub fn random_accretive(dim: usize, margin: f64, seed: u64) -> Result<Operator> {
    if dim == 0 {
        return Err(Error::EmptyOperator);
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::Domain(format!("margin must be >= 0, got {margin}")));
    }
    let mut r = rng::seeded(seed);
    let g = CMat::from_fn(dim, dim, |_, _| rng::complex_gaussian(&mut r));
    let h = CMat::from_fn(dim, dim, |_, _| rng::complex_gaussian(&mut r));
    let s = (&g * g.adjoint()).unscale(dim as f64);
    let k = (&h - h.adjoint()).unscale(2.0);
    let mut a = s + k;
    for i in 0..dim {
        a[(i, i)] += margin;
    }
    Ok(Operator::new(a)?.with_meta(OperatorMeta {
        seed: Some(seed),
        margin: Some(margin),
    }))
}

/// JSON form: `{"dim": n, "re": [[...]], "im": [[...]]}`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl From<&Operator> for OperatorJson {
    fn from(op: &Operator) -> Self {
        let n = op.dim();
        let m = op.matrix();
        OperatorJson {
            dim: n,
            re: (0..n)
                .map(|i| (0..n).map(|j| m[(i, j)].re).collect())
                .collect(),
            im: Some(
                (0..n)
                    .map(|i| (0..n).map(|j| m[(i, j)].im).collect())
                    .collect(),
            ),
            seed: op.meta.seed,
            margin: op.meta.margin,
        }
    }
}

impl TryFrom<OperatorJson> for Operator {
    type Error = Error;

    fn try_from(js: OperatorJson) -> Result<Self> {
        if js.re.len() != js.dim {
            return Err(Error::DimensionMismatch {
                expected: js.dim,
                got: js.re.len(),
            });
        }
        let op = Operator::from_parts(&js.re, js.im.as_deref())?;
        Ok(op.with_meta(OperatorMeta {
            seed: js.seed,
            margin: js.margin,
        }))
    }
}

impl Operator {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&OperatorJson::from(self)).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let js: OperatorJson = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        Operator::try_from(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn make_operator_examples() {
        let z = Operator::from_real(&[&[0.0]]).unwrap();
        assert_eq!(z.dim(), 1);
        assert_eq!(z.matrix()[(0, 0)], linalg::ZERO);
        let j = Operator::from_real(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(j.matrix()[(0, 1)], linalg::c(1.0));
        assert!(matches!(
            Operator::from_real(&[&[f64::NAN]]),
            Err(Error::NonFinite { row: 0, col: 0 })
        ));
        assert!(matches!(
            Operator::new(CMat::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn adjoint_examples() {
        let a = Operator::new(CMat::from_element(1, 1, C64::new(0.0, 1.0))).unwrap();
        assert_eq!(a.adjoint().matrix()[(0, 0)], C64::new(0.0, -1.0));
        let j = Operator::from_real(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let jt = Operator::from_real(&[&[1.0, 0.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(j.adjoint().matrix(), jt.matrix());
        let h = Operator::from_real(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        assert_eq!(h.adjoint().matrix(), h.matrix());
        assert_eq!(j.adjoint().adjoint(), j);
    }

    #[test]
    fn spectral_info_examples() {
        let id = Operator::identity(2).spectral_info(1e-12).unwrap();
        assert!((id.accretivity_margin - 1.0).abs() < 1e-14);
        assert!(id.sector_angle.abs() < 1e-7);
        assert!(id.eigenvalues.iter().all(|l| (l - 1.0).norm() < 1e-12));

        let j = Operator::from_real(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let info = j.spectral_info(1e-12).unwrap();
        assert!((info.accretivity_margin - 0.5).abs() < 1e-14);
        // numerical range is the disk |z - 1| <= 1/2
        assert!((info.sector_angle - (0.5f64).asin()).abs() < 1e-6);

        let skew = Operator::from_real(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        let info = skew.spectral_info(1e-12).unwrap();
        assert!(info.accretivity_margin.abs() < 1e-14);
        assert!((info.sector_angle - FRAC_PI_2).abs() < 1e-7);
        assert!(!info.is_analytic_generator());
        assert!(skew.require_analytic_generator().is_err());
    }

    #[test]
    fn non_accretive_sector_angles() {
        let neg = Operator::from_real(&[&[-1.0]]).unwrap();
        let info = neg.spectral_info(1e-12).unwrap();
        assert!((info.sector_angle - PI).abs() < 1e-12);
        // disk |z - 1| <= 5 surrounds the origin
        let big = Operator::from_real(&[&[1.0, 10.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(big.spectral_info(1e-12).unwrap().sector_angle, PI);
    }

    #[test]
    fn injectivity_proxy() {
        let a = Operator::diagonal(&[0.0, 1.0]);
        assert!(!a.spectral_info(1e-12).unwrap().is_injective);
        assert!(
            Operator::identity(3)
                .spectral_info(1e-12)
                .unwrap()
                .is_injective
        );
        assert!(
            !Operator::diagonal(&[0.0])
                .spectral_info(1e-12)
                .unwrap()
                .is_injective
        );
    }

    #[test]
    fn random_accretive_examples() {
        let a = random_accretive(1, 1.0, 99).unwrap();
        assert!(a.matrix()[(0, 0)].re >= 1.0);
        assert_eq!(
            random_accretive(3, 0.2, 5).unwrap(),
            random_accretive(3, 0.2, 5).unwrap()
        );
        let b = random_accretive(4, 0.0, 7).unwrap();
        assert!(b.spectral_info(1e-10).unwrap().accretivity_margin >= -1e-10);
        assert_eq!(b.meta.seed, Some(7));
    }

    #[test]
    fn operator_norm_examples() {
        assert!((Operator::identity(3).norm() - 1.0).abs() < 1e-14);
        assert!((Operator::diagonal(&[3.0, -2.0]).norm() - 3.0).abs() < 1e-14);
        let nil = Operator::from_real(&[&[0.0, 2.0], &[0.0, 0.0]]).unwrap();
        assert!((nil.norm() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let a = random_accretive(3, 0.5, 11).unwrap();
        let b = Operator::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        let s = r#"{"dim": 2, "re": [[1, 0], [0, 2]]}"#;
        assert_eq!(
            Operator::from_json(s).unwrap(),
            Operator::diagonal(&[1.0, 2.0])
        );
    }
}
