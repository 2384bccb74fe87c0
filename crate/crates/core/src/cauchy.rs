//! Weak solutions of `u' + Au = f` on `(0, inf)`.
//!
//! `u` is a weak solution when `sup_{0<tau<1} (1/tau) int_tau^{2tau} |u| < inf`
//! and `int (u, -phi' + A^* phi) ds = int (f, phi) ds` for every compactly
//! supported test function `phi`. Every weak solution is `e^{-tA} h + v` with
//! `v` the Duhamel integral, and `h` is the Cesaro trace of `u` at zero.
//!
//! Grid functions hold panel averages, as everywhere else in the crate. The
//! pairings against test functions are computed exactly for piecewise
//! constant `u` and `f`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVec, C64, ZERO};
use crate::maxreg::{
    assemble_duhamel, assemble_mplus, cesaro_average, weighted_opnorm, PointEvaluator,
};
use crate::operator::Operator;
use crate::semigroup::{semigroup_bound, Semigroup};
use crate::timegrid::{power_integral, GridFunction, TimeGrid};

/// Panel averages of `v(t) = int_0^t e^{-(t-s)A} f(s) ds` for piecewise
/// constant `f` (zero below the grid).
pub fn duhamel_v(a: &Operator, f: &GridFunction) -> Result<GridFunction> {
    assemble_duhamel(a, f.grid())?.apply_fn(f)
}

/// Panel averages of `e^{-tA} h`.
pub fn homogeneous(a: &Operator, h: &CVec, grid: &Arc<TimeGrid>) -> GridFunction {
    let sg = Semigroup::new(a);
    let vals: Vec<CVec> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = grid.panel(i);
            let t = linalg::phi_triple(a.matrix(), hi - lo);
            sg.exp_uncached(lo) * (t.phi1 * h)
        })
        .collect();
    let flat = vals.iter().flat_map(|v| v.iter().copied()).collect();
    GridFunction::from_values(grid.clone(), a.dim(), flat).expect("shape matches")
}

/// Largest `|(v(b) - v(a))/(b - a) + A v(m) - f(m)|` over the panels, with
/// `m` the panel midpoint and `v` evaluated exactly. First order in the
/// panel width for smooth `f`.
pub fn strong_form_defect(a: &Operator, f: &GridFunction) -> Result<f64> {
    let op = assemble_duhamel(a, f.grid())?;
    let ev = PointEvaluator::new(a, &op, f)?;
    let grid = f.grid();
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = grid.panel(i);
            let m = 0.5 * (lo + hi);
            let d = (ev.at(hi) - ev.at(lo)) / C64::from(hi - lo);
            (d + a.matrix() * ev.at(m) - f.value_vec(i)).norm()
        })
        .reduce(|| 0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub beta: f64,
    /// `max_t |v(t)|^2 / (t^{1-beta} int_0^t s^beta |f|^2 ds)` over the panel edges.
    pub ratio: f64,
    /// `sup |e^{-tA}|` measured on the grid.
    pub semigroup_bound: f64,
    /// `M^2 / (1 - beta)`, the Cauchy-Schwarz constant.
    pub bound: f64,
}

impl ContinuityReport {
    pub fn within_bound(&self) -> bool {
        self.ratio <= self.bound * (1.0 + 1e-6)
    }
}

pub fn continuity_bound_check(
    a: &Operator,
    f: &GridFunction,
    beta: f64,
) -> Result<ContinuityReport> {
    if !(beta < 1.0) {
        return Err(Error::Domain(format!("beta must be below 1, got {beta}")));
    }
    let grid = f.grid();
    let op = assemble_duhamel(a, grid)?;
    let table = op.panel_table().expect("Volterra operator");
    let states = table.edge_states(f.as_slice());
    let n = a.dim();
    let edges = grid.edges();
    let mut mass = 0.0;
    let mut ratio: f64 = 0.0;
    for k in 1..edges.len() {
        let (lo, hi) = grid.panel(k - 1);
        let fk: f64 = f.value(k - 1).iter().map(|z| z.norm_sqr()).sum();
        if fk > 0.0 {
            mass += fk * power_integral(lo, hi, beta)?;
        }
        if mass > 0.0 {
            let v2: f64 = states[k * n..(k + 1) * n]
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            ratio = ratio.max(v2 / (edges[k].powf(1.0 - beta) * mass));
        }
    }
    let m = semigroup_bound(a, grid);
    Ok(ContinuityReport {
        beta,
        ratio,
        semigroup_bound: m,
        bound: m * m / (1.0 - beta),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `1 - |x|`
    Tent,
    /// `(1 - |x|)^2 (1 + 2|x|)`, continuously differentiable.
    Bump,
}

impl Shape {
    fn value(self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let y = x.abs();
        match self {
            Shape::Tent => 1.0 - y,
            Shape::Bump => (1.0 - y).powi(2) * (1.0 + 2.0 * y),
        }
    }

    /// `int_{-1}^x`
    fn antiderivative(self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        let y = x.abs();
        let half = match self {
            Shape::Tent => y - 0.5 * y * y,
            Shape::Bump => y - y.powi(3) + 0.5 * y.powi(4),
        };
        0.5 + x.signum() * half
    }

    /// `int_{-1}^1 s^2`
    fn square_integral(self) -> f64 {
        match self {
            Shape::Tent => 2.0 / 3.0,
            Shape::Bump => 26.0 / 35.0,
        }
    }
}

/// `phi(t) = s((t - center)/radius) w` on a grid, with panel averages of
/// `phi` and of its exact derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub shape: Shape,
    pub center: f64,
    pub radius: f64,
    pub direction: CVec,
    pub phi: GridFunction,
    pub phi_dot: GridFunction,
}

impl TestFunction {
    pub fn new(
        grid: &Arc<TimeGrid>,
        shape: Shape,
        center: f64,
        radius: f64,
        direction: CVec,
    ) -> Result<Self> {
        let (lo, hi) = grid.span();
        if !(radius > 0.0) || !(center - radius > lo) || !(center + radius < hi) {
            return Err(Error::OutsideGrid {
                lo: center - radius,
                hi: center + radius,
                span_lo: lo,
                span_hi: hi,
            });
        }
        let n = direction.len();
        let mut phi = Vec::with_capacity(grid.len() * n);
        let mut phi_dot = Vec::with_capacity(grid.len() * n);
        for i in 0..grid.len() {
            let (a, b) = grid.panel(i);
            let (xa, xb) = ((a - center) / radius, (b - center) / radius);
            let avg = radius * (shape.antiderivative(xb) - shape.antiderivative(xa)) / (b - a);
            let slope = (shape.value(xb) - shape.value(xa)) / (b - a);
            phi.extend(direction.iter().map(|z| z * avg));
            phi_dot.extend(direction.iter().map(|z| z * slope));
        }
        Ok(Self {
            shape,
            center,
            radius,
            phi: GridFunction::from_values(grid.clone(), n, phi)?,
            phi_dot: GridFunction::from_values(grid.clone(), n, phi_dot)?,
            direction,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    /// `L^2(dt)` norm of the continuous `phi`.
    pub fn l2_norm(&self) -> f64 {
        (self.radius * self.shape.square_integral()).sqrt() * self.direction.norm()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.shape {
            Shape::Tent => "tent",
            Shape::Bump => "bump",
        };
        let k = self.direction.iter().position(|z| *z != ZERO).unwrap_or(0);
        write!(f, "{s}(c={:.6e},r={:.6e},e{k})", self.center, self.radius)
    }
}

/// Scales per decade of the battery radii.
pub const BATTERY_SCALES: usize = 5;

/// Tents and bumps centered in `[lo, hi]` with radii `R 10^{-k/5}`,
/// `k = 0..5`, `R = (hi - lo)/2`, along every basis direction.
pub fn test_function_battery(
    grid: &Arc<TimeGrid>,
    dim: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<TestFunction>> {
    if !(hi > lo) {
        return Err(Error::Domain("battery window must have lo < hi".into()));
    }
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo) * (1.0 - 1e-9));
    let mut out = Vec::new();
    for shape in [Shape::Tent, Shape::Bump] {
        for k in 0..BATTERY_SCALES {
            let radius = r * 10f64.powf(-(k as f64) / BATTERY_SCALES as f64);
            for j in 0..dim {
                let mut w = CVec::zeros(dim);
                w[j] = C64::from(1.0);
                out.push(TestFunction::new(grid, shape, c, radius, w)?);
            }
        }
    }
    Ok(out)
}

/// A battery window in the middle of the grid, from the edge a quarter of
/// the way in to the edge three quarters of the way in.
pub fn interior_window(grid: &TimeGrid) -> (f64, f64) {
    let e = grid.edges();
    let n = grid.len();
    (e[n / 4], e[(3 * n / 4).max(n / 4 + 1)])
}

/// `int (u, -phi' + A^* phi) ds - int (f, phi) ds`, exact for panel
/// functions `u`, `f`.
pub fn weak_residual(
    u: &GridFunction,
    f: &GridFunction,
    a: &Operator,
    phi: &TestFunction,
) -> Result<C64> {
    let grid = phi.phi.grid();
    for g in [u, f] {
        if g.grid() != grid && **g.grid() != **grid {
            return Err(Error::InvalidGrid("u, f and phi must share a grid".into()));
        }
        if g.dim() != a.dim() || phi.direction.len() != a.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                got: g.dim(),
            });
        }
    }
    let m = a.matrix();
    let widths = grid.widths();
    let mut acc = ZERO;
    for i in 0..grid.len() {
        let ui = u.value_vec(i);
        let p = phi.phi.value_vec(i);
        let pd = phi.phi_dot.value_vec(i);
        if p.iter().all(|z| *z == ZERO) && pd.iter().all(|z| *z == ZERO) {
            continue;
        }
        let au = m * &ui;
        let term = -pd.dotc(&ui) + p.dotc(&au) - p.dotc(&f.value_vec(i));
        acc += term * widths[i];
    }
    Ok(acc)
}

/// Largest `|weak_residual| / |phi|` over a battery.
pub fn max_weak_residual(
    u: &GridFunction,
    f: &GridFunction,
    a: &Operator,
    battery: &[TestFunction],
) -> Result<f64> {
    let r: Vec<f64> = battery
        .par_iter()
        .map(|p| Ok(weak_residual(u, f, a, p)?.norm() / p.l2_norm()))
        .collect::<Result<_>>()?;
    Ok(r.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupCondition {
    /// `max (1/tau) int_tau^{2tau} |u|` over grid edges `tau < 1/2`.
    pub value: f64,
    pub tau_at_max: f64,
    /// Log-log slope of the averages against `tau` over the smallest decade.
    pub small_tau_slope: f64,
    /// The averages grow as `tau` decreases: slope below `-SUP_TREND_SLOPE`.
    pub unbounded_trend: bool,
}

pub const SUP_TREND_SLOPE: f64 = 0.05;

pub fn sup_condition(u: &GridFunction) -> Result<SupCondition> {
    let grid = u.grid();
    let (lo, hi) = grid.span();
    if !(lo < 0.5) {
        return Err(Error::Domain("grid must reach below 1/2".into()));
    }
    let norms = u.pointwise_norms();
    let cesaro = |tau: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..grid.len() {
            let (a, b) = grid.panel(i);
            let w = b.min(2.0 * tau) - a.max(tau);
            if w > 0.0 {
                acc += norms[i] * w;
            }
        }
        acc / tau
    };
    let taus: Vec<f64> = grid
        .edges()
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t >= lo && t < 0.5 && 2.0 * t <= hi)
        .collect();
    if taus.is_empty() {
        return Err(Error::Domain("no grid edge in (t_min, 1/2)".into()));
    }
    let avgs: Vec<f64> = taus.iter().map(|&t| cesaro(t)).collect();
    let (k, &value) =
        avgs.iter().enumerate().fold(
            (0, &0.0),
            |best, (i, v)| if *v > *best.1 { (i, v) } else { best },
        );
    let t0 = taus[0];
    let pts: Vec<(f64, f64)> = taus
        .iter()
        .zip(&avgs)
        .filter(|(t, v)| **t <= 10.0 * t0 && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    let small_tau_slope = if pts.len() >= 2 {
        crate::timegrid::least_squares_slope(&pts)
    } else {
        0.0
    };
    Ok(SupCondition {
        value,
        tau_at_max: taus[k],
        small_tau_slope,
        unbounded_trend: small_tau_slope < -SUP_TREND_SLOPE,
    })
}

/// Two Richardson steps on `g(eps), g(eps/2), g(eps/4)` for an expansion
/// in integer powers of `eps`. Returns the extrapolated value and the
/// ratio of successive raw differences.
fn richardson(levels: [CVec; 3]) -> (CVec, f64) {
    let [g0, g1, g2] = levels;
    let r1a = &g1 * C64::from(2.0) - &g0;
    let r1b = &g2 * C64::from(2.0) - &g1;
    let r2 = (r1b * C64::from(4.0) - r1a) / C64::from(3.0);
    let d_coarse = (&g1 - &g0).norm();
    let d_fine = (&g2 - &g1).norm();
    let ratio = if d_coarse > 0.0 {
        d_fine / d_coarse
    } else if d_fine > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (r2, ratio)
}

/// Largest ratio of successive Cesaro differences still read as convergence.
pub const TRACE_CONTRACTION: f64 = 0.75;
/// Node-wise tolerance of the representation check in [`recover_trace`].
pub const REPRESENTATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecovery {
    pub h: CVec,
    pub eps: [f64; 3],
    /// Raw averages of `u - v` at `4 eps`, `2 eps`, `eps`.
    pub raw: Vec<CVec>,
    /// `max_i |u_i - (e^{-tA} h)_i - v_i| / (1 + |u_i|)`
    pub representation_error: f64,
}

/// `lim (1/eps) int_eps^{2eps} u` by Richardson extrapolation over
/// `4 eps_min, 2 eps_min, eps_min`, with `eps_min` the left end of the grid.
pub fn cesaro_limit(u: &GridFunction) -> Result<(CVec, [f64; 3], Vec<CVec>, f64)> {
    let e = u.grid().t_min();
    if !(e > 0.0) {
        return Err(Error::Domain(
            "Cesaro limits need a grid with t_min > 0".into(),
        ));
    }
    let eps = [4.0 * e, 2.0 * e, e];
    let raw: Vec<CVec> = eps
        .iter()
        .map(|&x| cesaro_average(u, x))
        .collect::<Result<_>>()?;
    let (h, ratio) = richardson([raw[0].clone(), raw[1].clone(), raw[2].clone()]);
    Ok((h, eps, raw, ratio))
}

/// Recovers `h` with `u = e^{-tA} h + v` from the Cesaro averages of
/// `u - v` and checks the representation node-wise.
pub fn recover_trace(a: &Operator, u: &GridFunction, f: &GridFunction) -> Result<TraceRecovery> {
    // v is known exactly; its own averages only vanish as t_min -> 0
    let v = duhamel_v(a, f)?;
    let (h, eps, raw, ratio) = cesaro_limit(&u.axpy(C64::from(-1.0), &v))?;
    let scale = raw.iter().map(|x| x.norm()).fold(1.0, f64::max);
    if ratio > TRACE_CONTRACTION && (&raw[2] - &raw[1]).norm() > 1e-12 * scale {
        return Err(Error::NotWeakSolution(format!(
            "Cesaro averages do not settle: difference ratio {ratio:.3} at eps = {:.3e}",
            eps[2]
        )));
    }
    let w = homogeneous(a, &h, u.grid());
    let representation_error = (0..u.len())
        .map(|i| {
            let ui = u.value_vec(i);
            (&ui - w.value_vec(i) - v.value_vec(i)).norm() / (1.0 + ui.norm())
        })
        .fold(0.0, f64::max);
    if !(representation_error <= REPRESENTATION_TOL) {
        return Err(Error::NotWeakSolution(format!(
            "u - e^{{-tA}}h - v reaches {representation_error:.3e}"
        )));
    }
    Ok(TraceRecovery {
        h,
        eps,
        raw,
        representation_error,
    })
}

/// Complex vector as separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VecJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CVec> for VecJson {
    fn from(v: &CVec) -> Self {
        Self {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }
}

impl VecJson {
    pub fn to_cvec(&self) -> Result<CVec> {
        if self.re.len() != self.im.len() {
            return Err(Error::DimensionMismatch {
                expected: self.re.len(),
                got: self.im.len(),
            });
        }
        Ok(CVec::from_iterator(
            self.re.len(),
            self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IvpReport {
    pub u0: VecJson,
    pub cesaro_limit: VecJson,
    /// Largest `|weak_residual| / |phi|` over the interior battery.
    pub max_residual: f64,
    /// `|cesaro_limit - u0|`
    pub trace_error: f64,
}

pub struct IvpSolution {
    pub u: GridFunction,
    pub report: IvpReport,
}

/// `u = e^{-tA} u0 + v`, with the weak residual over an interior battery
/// and the Cesaro limit at zero as postconditions.
pub fn solve_ivp(a: &Operator, u0: &CVec, f: &GridFunction) -> Result<IvpSolution> {
    a.require_analytic_generator()?;
    if u0.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: u0.len(),
        });
    }
    let grid = f.grid();
    let v = duhamel_v(a, f)?;
    let w = homogeneous(a, u0, grid);
    let u = w.axpy(C64::from(1.0), &v);
    let (lo, hi) = interior_window(grid);
    let battery = test_function_battery(grid, a.dim(), lo, hi)?;
    let max_residual = max_weak_residual(&u, f, a, &battery)?;
    let (limit, ..) = cesaro_limit(&u)?;
    let report = IvpReport {
        u0: u0.into(),
        cesaro_limit: (&limit).into(),
        max_residual,
        trace_error: (&limit - u0).norm(),
    };
    Ok(IvpSolution { u, report })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `max_i |A v_i - (M+ f)_i| / max_i |(M+ f)_i|`, absolute if `M+ f = 0`.
    pub av_matches_mplus: f64,
    /// `(|f - Av|_beta + |Av|_beta) / |f|_beta`
    pub estimate_ratio: f64,
    /// `|M+|` on `L^2(t^beta dt)` for the same grid.
    pub mplus_norm: f64,
}

pub fn maxreg_identity_check(a: &Operator, f: &GridFunction, beta: f64) -> Result<IdentityReport> {
    if !(beta < 1.0) {
        return Err(Error::Domain(format!("beta must be below 1, got {beta}")));
    }
    let grid = f.grid();
    let v = duhamel_v(a, f)?;
    let mplus = assemble_mplus(a, grid)?;
    let mf = mplus.apply_fn(f)?;
    let m = a.matrix();
    let av = v.map_panels(|_, x| m * linalg::to_cvec(x));
    let scale = mf.pointwise_norms().into_iter().fold(0.0, f64::max);
    let diff = av
        .axpy(C64::from(-1.0), &mf)
        .pointwise_norms()
        .into_iter()
        .fold(0.0, f64::max);
    let vdot = f.axpy(C64::from(-1.0), &av);
    let fn_ = f.weighted_norm(beta)?.value;
    let estimate_ratio = if fn_ > 0.0 {
        (vdot.weighted_norm(beta)?.value + av.weighted_norm(beta)?.value) / fn_
    } else {
        0.0
    };
    Ok(IdentityReport {
        av_matches_mplus: if scale > 0.0 { diff / scale } else { diff },
        estimate_ratio,
        mplus_norm: weighted_opnorm(&mplus, beta)?,
    })
}

/// A candidate weak solution with its admissibility indicator and residuals.
#[derive(Clone, Debug)]
pub struct WeakSolutionCandidate {
    pub u: GridFunction,
    pub sup_indicator: SupCondition,
    pub residuals: Vec<(String, C64)>,
}

impl WeakSolutionCandidate {
    pub fn assess(
        a: &Operator,
        u: GridFunction,
        f: &GridFunction,
        battery: &[TestFunction],
    ) -> Result<Self> {
        let sup_indicator = sup_condition(&u)?;
        let residuals = battery
            .par_iter()
            .map(|p| Ok((p.to_string(), weak_residual(&u, f, a, p)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            u,
            sup_indicator,
            residuals,
        })
    }
}
