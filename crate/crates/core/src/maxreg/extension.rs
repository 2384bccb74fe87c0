//! The extension of `M-` to `L^2(dt/t)` and the Cesaro trace criterion.
//!
//! For compactly supported `f`,
//!
//! ```text
//! M- f(t) = Mt f(t) + e^{-tA} g,    g = int_0^inf A e^{-sA} f(s) ds,
//! ```
//!
//! where `Mt` is a sum of five integral operators, each bounded on
//! `L^2(dt/t)`. On panel functions `g = sum_j (E(a_j) - E(b_j)) f_j`, so `Mt`
//! is the assembled `M-` minus a rank form.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, ZERO};
use crate::operator::Operator;
use crate::quadrature::GaussLegendre;
use crate::semigroup::{default_qe_grid, quadratic_estimate, Semigroup};
use crate::timegrid::{GridFunction, TimeGrid};

use super::assemble::{
    assemble_mminus, assemble_mplus, AssembledOperator, OperatorKind, PointEvaluator,
};
use super::sweep::{growth_rows, growth_verdict, GrowthRow, Verdict};

const GL_POINTS: usize = 16;

/// Longest quadrature piece: resolves `e^{-sA}` to well below 1e-10.
fn max_piece(a: &CMat) -> f64 {
    0.5 / linalg::norm2(a).max(1.0)
}

/// `g = int A e^{-sA} f(s) ds`, exact for panel functions.
pub fn trace_vector(a: &Operator, f: &GridFunction) -> CVec {
    let sg = Semigroup::new(a);
    let grid = f.grid();
    let mut g = CVec::zeros(a.dim());
    for j in 0..grid.len() {
        let v = f.value_vec(j);
        if v.iter().all(|z| *z == ZERO) {
            continue;
        }
        let (lo, hi) = grid.panel(j);
        g += (&*sg.exp(lo) - &*sg.exp(hi)) * v;
    }
    g
}

/// `f -> e^{-tA} g(f)` on panel averages: `left_i = E(a_i) phi1(D_i)`,
/// `right_j = E(a_j) - E(b_j)`.
pub fn mminus_rank_term(a: &Operator, grid: &Arc<TimeGrid>) -> AssembledOperator {
    let sg = Semigroup::new(a);
    let (left, right): (Vec<CMat>, Vec<CMat>) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = grid.panel(i);
            let t = sg.triple(hi - lo);
            let e = sg.exp(lo);
            (&*e * &t.phi1, &*e - &*sg.exp(hi))
        })
        .unzip();
    AssembledOperator::rank_form(grid, left, right)
}

/// The bounded part `Mt = M- - e^{-tA} g(.)` of `M-` on `L^2(dt/t)`.
pub fn assemble_mminus_tilde(a: &Operator, grid: &Arc<TimeGrid>) -> Result<AssembledOperator> {
    let m = assemble_mminus(a, grid)?;
    Ok(
        AssembledOperator::linear_combination(vec![(1.0, m), (-1.0, mminus_rank_term(a, grid))])
            .with_kind(OperatorKind::Custom("mminus tilde".into()))
            .with_measure(-1.0),
    )
}

/// The five integrals of `Mt f(t)` evaluated separately, plus `e^{-tA} g`.
#[derive(Clone, Debug)]
pub struct ExtensionTerms {
    pub t: f64,
    /// `t^{1/2} M-(s^{-1/2} f)(t)`
    pub scaled: CVec,
    /// `int_t^{2t} A e^{-(s-t)A} (s^{1/2} - t^{1/2}) s^{-1/2} f ds`
    pub near: CVec,
    /// `int_{2t}^inf A (e^{-(s-t)A} - e^{-(s+t)A}) (s^{1/2} - t^{1/2}) s^{-1/2} f ds`
    pub far: CVec,
    /// `-int_{2t}^inf A e^{-(s+t)A} t^{1/2} s^{-1/2} f ds`
    pub far_reflected: CVec,
    /// `-int_0^{2t} A e^{-(s+t)A} f ds`
    pub near_reflected: CVec,
    /// `e^{-tA} g`
    pub rank: CVec,
}

impl ExtensionTerms {
    pub fn tilde(&self) -> CVec {
        &self.scaled + &self.near + &self.far + &self.far_reflected + &self.near_reflected
    }

    pub fn total(&self) -> CVec {
        self.tilde() + &self.rank
    }
}

struct TermQuadrature<'a> {
    sg: Semigroup,
    f: &'a GridFunction,
    gl: GaussLegendre,
    piece: f64,
    g: CVec,
}

impl<'a> TermQuadrature<'a> {
    fn new(a: &Operator, f: &'a GridFunction) -> Self {
        Self {
            sg: Semigroup::new(a),
            f,
            gl: GaussLegendre::new(GL_POINTS),
            piece: max_piece(a.matrix()),
            g: trace_vector(a, f),
        }
    }

    /// Calls `visit(s, w, f(s))` on quadrature points covering the support of
    /// `f` inside `[lo, hi]`, with every breakpoint a piece boundary.
    fn visit(&self, lo: f64, hi: f64, breaks: &[f64], mut visit: impl FnMut(f64, f64, CVec)) {
        let grid = self.f.grid();
        for j in 0..grid.len() {
            let v = self.f.value_vec(j);
            if v.iter().all(|z| *z == ZERO) {
                continue;
            }
            let (a, b) = grid.panel(j);
            let (p, q) = (a.max(lo), b.min(hi));
            if !(q > p) {
                continue;
            }
            let mut cuts = vec![p];
            cuts.extend(breaks.iter().copied().filter(|&x| x > p && x < q));
            cuts.push(q);
            for w in cuts.windows(2) {
                for (s, wt) in self.gl.composite(w[0], w[1], self.piece) {
                    visit(s, wt, v.clone());
                }
            }
        }
    }

    fn terms(&self, t: f64) -> ExtensionTerms {
        let a = self.sg.matrix();
        let n = a.nrows();
        let rt = t.sqrt();
        let (mut scaled, mut near, mut far) = (CVec::zeros(n), CVec::zeros(n), CVec::zeros(n));
        let (mut far_r, mut near_r) = (CVec::zeros(n), CVec::zeros(n));
        self.visit(t, f64::INFINITY, &[2.0 * t], |s, w, v| {
            let rs = s.sqrt();
            let ke = a * (self.sg.exp_uncached(s - t) * v.clone());
            scaled += &ke * C64::from(w * rt / rs);
            if s <= 2.0 * t {
                near += &ke * C64::from(w * (rs - rt) / rs);
            } else {
                let kr = a * (self.sg.exp_uncached(s + t) * v);
                far += (&ke - &kr) * C64::from(w * (rs - rt) / rs);
                far_r -= kr * C64::from(w * rt / rs);
            }
        });
        self.visit(0.0, 2.0 * t, &[], |s, w, v| {
            near_r -= a * (self.sg.exp_uncached(s + t) * v) * C64::from(w);
        });
        ExtensionTerms {
            t,
            scaled,
            near,
            far,
            far_reflected: far_r,
            near_reflected: near_r,
            rank: self.sg.exp_uncached(t) * &self.g,
        }
    }
}

/// The five terms and the rank term of `M- f(t)`, each by composite
/// Gauss-Legendre quadrature over the support of `f`.
pub fn extension_terms(a: &Operator, f: &GridFunction, t: f64) -> Result<ExtensionTerms> {
    check_dims(a, f)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    Ok(TermQuadrature::new(a, f).terms(t))
}

/// `M- f` at the grid nodes through the five-term decomposition plus `e^{-tA} g`.
pub fn mminus_extension(a: &Operator, f: &GridFunction) -> Result<GridFunction> {
    check_dims(a, f)?;
    let q = TermQuadrature::new(a, f);
    let vals: Vec<CVec> = f
        .grid()
        .nodes()
        .par_iter()
        .map(|&t| q.terms(t).total())
        .collect();
    let flat = vals.iter().flat_map(|v| v.iter().copied()).collect();
    GridFunction::from_values(f.grid().clone(), a.dim(), flat)
}

fn check_dims(a: &Operator, f: &GridFunction) -> Result<()> {
    if f.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: f.dim(),
        });
    }
    Ok(())
}

fn max_rel_diff(x: &GridFunction, y: &GridFunction) -> f64 {
    let scale = x.pointwise_norms().into_iter().fold(0.0, f64::max);
    if scale == 0.0 {
        return y.pointwise_norms().into_iter().fold(0.0, f64::max);
    }
    let d = x.axpy(C64::from(-1.0), y);
    d.pointwise_norms().into_iter().fold(0.0, f64::max) / scale
}

/// Largest node-wise discrepancy between the five-term route and the exact
/// values of assembled `M- f`, relative to `max |M- f|`.
pub fn extension_discrepancy(a: &Operator, f: &GridFunction) -> Result<f64> {
    let m = assemble_mminus(a, f.grid())?;
    let direct = PointEvaluator::new(a, &m, f)?.at_nodes();
    Ok(max_rel_diff(&direct, &mminus_extension(a, f)?))
}

/// Compares `t^alpha M+ f(t)` with `M+(s^alpha f)(t) + int_0^t A e^{-(t-s)A}
/// (t^alpha - s^alpha) f(s) ds`, `alpha = beta / 2`, at every node. The left
/// side uses the exact values of assembled `M+`, the right side composite
/// Gauss-Legendre quadrature. Returns the largest discrepancy relative to
/// `max |t^alpha M+ f|`.
pub fn decomposition_identity_check(a: &Operator, f: &GridFunction, beta: f64) -> Result<f64> {
    if !(beta < 1.0) || beta == 0.0 {
        return Err(Error::Domain(format!(
            "need beta < 1, beta != 0, got {beta}"
        )));
    }
    check_dims(a, f)?;
    let alpha = beta / 2.0;
    let m = assemble_mplus(a, f.grid())?;
    let direct = PointEvaluator::new(a, &m, f)?.at_nodes();
    let left = direct.map_panels(|i, v| {
        let s = f.grid().nodes()[i].powf(alpha);
        linalg::to_cvec(v) * C64::from(s)
    });
    let q = TermQuadrature::new(a, f);
    let am = a.matrix();
    let vals: Vec<CVec> = f
        .grid()
        .nodes()
        .par_iter()
        .map(|&t| {
            let ta = t.powf(alpha);
            let (mut main, mut corr) = (CVec::zeros(a.dim()), CVec::zeros(a.dim()));
            q.visit(0.0, t, &[], |s, w, v| {
                let k = am * (q.sg.exp_uncached(t - s) * v);
                let sa = s.powf(alpha);
                main += &k * C64::from(w * sa);
                corr += k * C64::from(w * (ta - sa));
            });
            main + corr
        })
        .collect();
    let flat = vals.iter().flat_map(|v| v.iter().copied()).collect();
    let right = GridFunction::from_values(f.grid().clone(), a.dim(), flat)?;
    Ok(max_rel_diff(&left, &right))
}

/// `(1/tau) int_tau^{2tau} g(t) dt` for a panel function `g`.
pub fn cesaro_average(g: &GridFunction, tau: f64) -> Result<CVec> {
    let grid = g.grid();
    let (lo, hi) = grid.span();
    if !(tau > 0.0) || tau < lo * (1.0 - 1e-12) || 2.0 * tau > hi * (1.0 + 1e-12) {
        return Err(Error::OutsideGrid {
            lo: tau,
            hi: 2.0 * tau,
            span_lo: lo,
            span_hi: hi,
        });
    }
    let mut acc = CVec::zeros(g.dim());
    for i in 0..grid.len() {
        let (a, b) = grid.panel(i);
        let w = b.min(2.0 * tau) - a.max(tau);
        if w > 0.0 {
            acc += g.value_vec(i) * C64::from(w);
        }
    }
    Ok(acc / C64::from(tau))
}

/// Relative size below which a Cesaro limit counts as zero.
pub const ZERO_LIMIT_RTOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct TraceReport {
    pub taus: Vec<f64>,
    /// Cesaro averages of `M- f` at every `tau`.
    pub averages: Vec<CVec>,
    /// Average at the smallest `tau`.
    pub limit_vector: CVec,
    /// `int A e^{-sA} f ds`, computed directly.
    pub direct_limit: CVec,
    /// `|limit_vector - direct_limit|`
    pub limit_error: f64,
    pub is_zero: bool,
    /// Squared `L^2(dt/t)` norms of `M- f` on `[tau, t_max]`.
    pub rows: Vec<GrowthRow>,
    pub weighted_norm_finite_verdict: Verdict,
    /// `sup_tau (1/tau) int_tau^{2tau} |M- f|^2 dt / |f|^2_{dt/t}`.
    pub bound_ratio: f64,
    /// Largest quadratic-estimate constant of `A*` over the basis vectors.
    pub qe_constant: f64,
}

/// Gate: the quadratic estimate for `A*` converges on every basis vector.
/// Returns the largest measured constant.
pub fn adjoint_quadratic_estimate(a: &Operator) -> Result<f64> {
    let adj = a.adjoint();
    let grid = default_qe_grid();
    let mut worst: f64 = 0.0;
    for k in 0..a.dim() {
        let mut h = CVec::zeros(a.dim());
        h[k] = linalg::ONE;
        let q = quadratic_estimate(&adj, &h, &grid)?;
        if !q.converged {
            return Err(Error::NonConvergent(format!(
                "quadratic estimate for the adjoint on basis vector {k}"
            )));
        }
        worst = worst.max(q.value);
    }
    Ok(worst)
}

/// Cesaro averages of `M- f` along decreasing `taus`, the truncated
/// `L^2(dt/t)` norms of `M- f` on `[tau, t_max]`, and the averaged bound.
pub fn trace_criterion(a: &Operator, f: &GridFunction, taus: &[f64]) -> Result<TraceReport> {
    check_dims(a, f)?;
    if taus.is_empty() || taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("taus must be nonempty and decreasing".into()));
    }
    let qe_constant = adjoint_quadratic_estimate(a)?;
    let grid = f.grid();
    let g = assemble_mminus(a, grid)?.apply_fn(f)?;
    let averages: Vec<CVec> = taus
        .iter()
        .map(|&t| cesaro_average(&g, t))
        .collect::<Result<_>>()?;
    let limit_vector = averages.last().expect("nonempty").clone();
    let direct_limit = trace_vector(a, f);

    let sg = Semigroup::new(a);
    let scale: f64 = (0..grid.len())
        .map(|j| {
            let (lo, hi) = grid.panel(j);
            ((&*sg.exp(lo) - &*sg.exp(hi)) * f.value_vec(j)).norm()
        })
        .sum();
    let is_zero = limit_vector.norm() <= ZERO_LIMIT_RTOL * scale;

    let (_, hi) = grid.span();
    let norm_sq: Vec<f64> = taus
        .iter()
        .map(|&t| g.weighted_norm_on(-1.0, t, hi).map(|w| w.value.powi(2)))
        .collect::<Result<_>>()?;
    let rows = growth_rows(taus, &norm_sq);
    let verdict = if scale == 0.0 {
        Verdict::Bounded
    } else {
        growth_verdict(&rows)
    };

    let energy = GridFunction::from_values(
        grid.clone(),
        1,
        g.pointwise_norms()
            .iter()
            .map(|x| C64::from(x * x))
            .collect(),
    )?;
    let f_sq = f.weighted_norm(-1.0)?.value.powi(2);
    let mut sup: f64 = 0.0;
    for &t in taus {
        sup = sup.max(cesaro_average(&energy, t)?[0].re);
    }
    let bound_ratio = if f_sq > 0.0 { sup / f_sq } else { 0.0 };

    Ok(TraceReport {
        taus: taus.to_vec(),
        limit_error: (&limit_vector - &direct_limit).norm(),
        averages,
        limit_vector,
        direct_limit,
        is_zero,
        rows,
        weighted_norm_finite_verdict: verdict,
        bound_ratio,
        qe_constant,
    })
}

/// `f = w` on `[1, 2]` and `f = w2` on `[3, 4]` with `w2` chosen so that
/// `int A e^{-sA} f ds = 0` on the panels of `grid`.
pub fn zero_limit_input(a: &Operator, grid: &Arc<TimeGrid>, w: &CVec) -> Result<GridFunction> {
    let first = GridFunction::indicator(grid.clone(), 1.0, 2.0, w);
    let second_unit = |v: &CVec| GridFunction::indicator(grid.clone(), 3.0, 4.0, v);
    let (Some(_), Some((j0, j1))) = (first.support(), second_unit(w).support()) else {
        return Err(Error::InvalidGrid("grid must cover [1, 4]".into()));
    };
    let sg = Semigroup::new(a);
    let g1 = trace_vector(a, &first);
    let m = &*sg.exp(grid.panel(j0).0) - &*sg.exp(grid.panel(j1).1);
    let w2 = -linalg::solve(&m, &CMat::from_column_slice(a.dim(), 1, g1.as_slice()))?;
    let second = second_unit(&CVec::from_column_slice(w2.as_slice()));
    Ok(first.axpy(linalg::ONE, &second))
}

/// `f -> M+ f - A e^{-tA} int e^{-sA} f ds` on panel averages.
pub fn remark_beta1_operator(a: &Operator, grid: &Arc<TimeGrid>) -> Result<AssembledOperator> {
    let m = assemble_mplus(a, grid)?;
    let sg = Semigroup::new(a);
    let (left, right): (Vec<CMat>, Vec<CMat>) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = grid.panel(i);
            let d = hi - lo;
            let t = sg.triple(d);
            let e = sg.exp(lo);
            // (E(a) - E(b)) / D and E(a) Phi(D)
            (sg.matrix() * (&*e * &t.phi1), &*e * t.phi1.map(|z| z * d))
        })
        .unzip();
    Ok(AssembledOperator::linear_combination(vec![
        (1.0, m),
        (-1.0, AssembledOperator::rank_form(grid, left, right)),
    ])
    .with_kind(OperatorKind::Custom("mplus minus trace".into()))
    .with_measure(1.0))
}

/// `|M+ f - A e^{-tA} int e^{-sA} f ds| / |f|`, both in `L^2(t dt)`.
pub fn remark_beta1_check(a: &Operator, f: &GridFunction) -> Result<f64> {
    check_dims(a, f)?;
    let Some((i0, i1)) = f.support() else {
        return Err(Error::Degenerate("f vanishes".into()));
    };
    if i0 == 0 || i1 + 1 >= f.len() {
        return Err(Error::Domain("f must be supported inside the grid".into()));
    }
    let y = remark_beta1_operator(a, f.grid())?.apply_fn(f)?;
    Ok(y.weighted_norm(1.0)?.value / f.weighted_norm(1.0)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::maxreg::weighted_opnorm;
    use crate::operator::random_accretive;

    fn scalar(l: f64) -> Operator {
        Operator::from_real(&[&[l]]).unwrap()
    }

    fn grid_through(breaks: &[f64], per_decade: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::log_panels_through(breaks, per_decade).unwrap())
    }

    fn one() -> CVec {
        CVec::from_element(1, c(1.0))
    }

    #[test]
    fn five_terms_reassemble_mminus() {
        let grid = grid_through(&[1e-3, 1.0, 2.0, 10.0], 24);
        let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &one());
        let err = extension_discrepancy(&scalar(1.0), &f).unwrap();
        assert!(err < 1e-6, "{err}");
        for seed in 0..2 {
            let a = random_accretive(2, 0.1, 10 + seed).unwrap();
            let w = CVec::from_vec(vec![c(1.0), C64::new(0.0, -0.5)]);
            let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &w);
            let err = extension_discrepancy(&a, &f).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn extension_of_zero_is_zero() {
        let grid = grid_through(&[1e-2, 1.0, 10.0], 8);
        let f = GridFunction::zeros(grid, 1);
        let v = mminus_extension(&scalar(1.0), &f).unwrap();
        assert!(v.is_zero());
    }

    #[test]
    fn below_the_support_only_the_rank_term_survives() {
        let grid = grid_through(&[1e-3, 1.0, 2.0, 10.0], 16);
        let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &one());
        let terms = extension_terms(&scalar(1.0), &f, 1e-3).unwrap();
        // M- f(t) = (e^{-(1-t)} - e^{-(2-t)}) for t < 1
        let t = 1e-3f64;
        let exact = (-(1.0 - t)).exp() - (-(2.0 - t)).exp();
        assert!((terms.total()[0].re - exact).abs() < 1e-10);
        assert!(terms.tilde().norm() < 1e-2 * exact);
    }

    #[test]
    fn tilde_operator_matches_quadrature_route() {
        let grid = grid_through(&[1e-2, 1.0, 2.0, 10.0], 16);
        let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &one());
        let a = scalar(1.0);
        let tilde = assemble_mminus_tilde(&a, &grid)
            .unwrap()
            .apply_fn(&f)
            .unwrap();
        let direct = assemble_mminus(&a, &grid).unwrap().apply_fn(&f).unwrap();
        let g = trace_vector(&a, &f);
        // panel average of e^{-tA} g on [lo, hi]
        for i in 0..grid.len() {
            let (lo, hi) = grid.panel(i);
            let avg = ((-lo).exp() - (-hi).exp()) / (hi - lo) * g[0].re;
            assert!((direct.value(i)[0] - tilde.value(i)[0] - c(avg)).norm() < 1e-12);
        }
    }

    #[test]
    fn tilde_norm_is_stable_under_refinement() {
        let a = scalar(1.0);
        let norms: Vec<f64> = [(1e-3, 24), (1e-4, 32), (1e-5, 48)]
            .iter()
            .map(|&(t, k)| {
                let g = Arc::new(TimeGrid::log_grid_per_decade(t, 1e3, k).unwrap());
                weighted_opnorm(&assemble_mminus_tilde(&a, &g).unwrap(), -1.0).unwrap()
            })
            .collect();
        assert!(norms[2] / norms[1] <= 1.05, "{norms:?}");
        let m = assemble_mminus(
            &a,
            &Arc::new(TimeGrid::log_grid_per_decade(1e-5, 1e3, 48).unwrap()),
        )
        .unwrap();
        assert!(weighted_opnorm(&m, -1.0).unwrap() > norms[2]);
    }

    #[test]
    fn decomposition_identity_examples() {
        let grid = grid_through(&[1e-2, 1.0, 2.0, 20.0], 24);
        let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &one());
        for beta in [0.5, -1.0] {
            let err = decomposition_identity_check(&scalar(1.0), &f, beta).unwrap();
            assert!(err < 1e-8, "beta {beta}: {err}");
        }
        let a = random_accretive(3, 0.1, 5).unwrap();
        let w = CVec::from_vec(vec![c(1.0), c(-1.0), C64::new(0.0, 1.0)]);
        let f3 = GridFunction::indicator(grid.clone(), 0.5, 3.0, &w);
        assert!(decomposition_identity_check(&a, &f3, 0.9).unwrap() < 1e-8);
        let zero = GridFunction::zeros(grid.clone(), 1);
        assert_eq!(
            decomposition_identity_check(&scalar(1.0), &zero, 0.5).unwrap(),
            0.0
        );
        assert!(decomposition_identity_check(&scalar(1.0), &f, 0.0).is_err());
        assert!(decomposition_identity_check(&scalar(1.0), &f, 1.0).is_err());
    }

    #[test]
    fn cesaro_average_examples() {
        let grid = Arc::new(TimeGrid::log_grid(1e-3, 10.0, 64).unwrap());
        let w = CVec::from_vec(vec![c(2.0), C64::new(0.0, 1.0)]);
        let g = GridFunction::constant(grid.clone(), &w);
        for tau in [1e-3, 0.05, 5.0] {
            let v = cesaro_average(&g, tau).unwrap();
            assert!((v - &w).norm() < 1e-13);
        }
        // g(t) = t as panel averages
        let g = GridFunction::from_panel_average(grid.clone(), 1, |t| CVec::from_element(1, c(t)));
        let tau = 0.1;
        let edges = grid.edges();
        let aligned = grid_through(&[edges[0], tau, 2.0 * tau, 10.0], 32);
        let ga = GridFunction::from_panel_average(aligned, 1, |t| CVec::from_element(1, c(t)));
        assert!((cesaro_average(&ga, tau).unwrap()[0].re - 1.5 * tau).abs() < 1e-14);
        assert!((cesaro_average(&g, tau).unwrap()[0].re - 1.5 * tau).abs() < 1e-2 * tau);
        assert!(matches!(
            cesaro_average(&g, 6.0),
            Err(Error::OutsideGrid { .. })
        ));
        assert!(cesaro_average(&g, 1e-4).is_err());
    }

    #[test]
    fn cesaro_limit_recovers_trace_vector() {
        let grid = grid_through(&[1e-6, 1.0, 2.0, 10.0], 32);
        let a = random_accretive(2, 0.1, 3).unwrap();
        let w = CVec::from_vec(vec![c(1.0), c(0.5)]);
        let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &w);
        let g = assemble_mminus(&a, &grid).unwrap().apply_fn(&f).unwrap();
        let direct = trace_vector(&a, &f);
        let lim = cesaro_average(&g, 1e-5).unwrap();
        assert!((lim - direct).norm() < 1e-4);
    }

    #[test]
    fn trace_criterion_separates_the_two_cases() {
        let grid = grid_through(&[1e-8, 1.0, 2.0, 3.0, 4.0, 10.0], 16);
        let a = scalar(1.0);
        let taus: Vec<f64> = (1..=7).map(|k| 10f64.powi(-k)).collect();

        let bad = GridFunction::indicator(grid.clone(), 1.0, 2.0, &one());
        let r = trace_criterion(&a, &bad, &taus).unwrap();
        assert!(!r.is_zero);
        assert!(r.limit_error < 1e-4);
        assert!((r.direct_limit[0].re - 0.232544).abs() < 1e-6);
        assert_eq!(r.weighted_norm_finite_verdict, Verdict::Growing);
        assert!(r.bound_ratio.is_finite() && r.bound_ratio > 0.0);

        let good = zero_limit_input(&a, &grid, &one()).unwrap();
        assert!(trace_vector(&a, &good).norm() < 1e-15);
        let r = trace_criterion(&a, &good, &taus).unwrap();
        assert!(r.is_zero);
        assert_eq!(r.weighted_norm_finite_verdict, Verdict::Bounded);

        let zero = GridFunction::zeros(grid.clone(), 1);
        let r = trace_criterion(&a, &zero, &taus).unwrap();
        assert!(r.is_zero && r.limit_vector.norm() == 0.0);
        assert_eq!(r.rows.last().unwrap().norm_sq, 0.0);
    }

    #[test]
    fn trace_criterion_gate() {
        // A* = A skew: the quadratic estimate does not converge
        let a = Operator::from_real(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        let grid = grid_through(&[1e-3, 1.0, 2.0, 10.0], 8);
        let f = GridFunction::zeros(grid, 2);
        assert!(trace_criterion(&a, &f, &[1e-2]).is_err());
    }

    #[test]
    fn remark_ratio_is_stable() {
        let a = scalar(1.0);
        let ratios: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&k| {
                let grid = grid_through(&[1e-3, 1.0, 2.0, 100.0], k);
                let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &one());
                remark_beta1_check(&a, &f).unwrap()
            })
            .collect();
        assert!(ratios.iter().all(|r| r.is_finite()));
        assert!((ratios[2] / ratios[1] - 1.0).abs() < 0.05, "{ratios:?}");
        let grid = grid_through(&[1e-3, 1.0, 2.0, 100.0], 16);
        assert!(remark_beta1_check(&a, &GridFunction::zeros(grid.clone(), 1)).is_err());
        let edge = GridFunction::indicator(grid, 1e-3, 1e-2, &one());
        assert!(remark_beta1_check(&a, &edge).is_err());
    }
}
