//! Discretization of the half-line: panels, piecewise-constant grid
//! functions, exact power-weight panel integrals and the Schur-lemma bound.
//!
//! A [`GridFunction`] is piecewise constant: the value stored for node `i`
//! is taken on the whole panel `[edges[i], edges[i+1]]`. Integrals against
//! `t^beta dt` are done panel by panel in closed form, so the only
//! approximation is the piecewise-constant model itself.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVec, C64, ZERO};
use crate::operator::Operator;
use crate::semigroup::Semigroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    LogUniform,
    Uniform,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    edges: Vec<f64>,
    spacing: Spacing,
}

/// JSON description of a grid: `{t_min, t_max, N, spacing}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGridSpec {
    pub t_min: f64,
    pub t_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::LogUniform
}

impl TimeGridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        match self.spacing {
            Spacing::LogUniform => TimeGrid::log_grid(self.t_min, self.t_max, self.n),
            Spacing::Uniform => TimeGrid::uniform(self.t_min, self.t_max, self.n),
            Spacing::Custom => Err(Error::InvalidGrid(
                "custom grids cannot be rebuilt from a spec".into(),
            )),
        }
    }
}

fn check_bounds(t_min: f64, t_max: f64, n: usize) -> Result<()> {
    if !(t_min > 0.0) || !t_min.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "t_min must be positive, got {t_min}"
        )));
    }
    if !(t_max > t_min) || !t_max.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "t_max must exceed t_min, got [{t_min}, {t_max}]"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 nodes, got {n}"
        )));
    }
    Ok(())
}

impl TimeGrid {
    /// Geometric nodes from `t_min` to `t_max`, panel edges at geometric
    /// midpoints, outer edges at the end nodes.
    pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        check_bounds(t_min, t_max, n)?;
        let (l0, l1) = (t_min.ln(), t_max.ln());
        let step = (l1 - l0) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| (l0 + step * i as f64).exp()).collect();
        nodes[0] = t_min;
        nodes[n - 1] = t_max;
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(t_min);
        for i in 0..n - 1 {
            edges.push((l0 + step * (i as f64 + 0.5)).exp());
        }
        edges.push(t_max);
        Ok(Self {
            nodes,
            edges,
            spacing: Spacing::LogUniform,
        })
    }

    /// Log grid with a fixed number of nodes per decade (rounded up).
    pub fn log_grid_per_decade(t_min: f64, t_max: f64, per_decade: usize) -> Result<Self> {
        check_bounds(t_min, t_max, 2)?;
        let decades = (t_max / t_min).log10();
        let n = ((decades * per_decade as f64).ceil() as usize + 1).max(2);
        Self::log_grid(t_min, t_max, n)
    }

    pub fn uniform(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        check_bounds(t_min, t_max, n)?;
        let h = (t_max - t_min) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| t_min + h * i as f64).collect();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(t_min);
        for i in 0..n - 1 {
            edges.push(t_min + h * (i as f64 + 0.5));
        }
        edges.push(t_max);
        Ok(Self {
            nodes,
            edges,
            spacing: Spacing::Uniform,
        })
    }

    /// Grid from explicit panel edges. Nodes sit at geometric panel centers,
    /// or at the arithmetic center of a first panel starting at 0.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::InvalidGrid("need at least 2 panels".into()));
        }
        if !(edges[0] >= 0.0) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidGrid(
                "edges must be finite and nonnegative".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(
                "edges must be strictly increasing".into(),
            ));
        }
        let nodes = edges
            .windows(2)
            .map(|w| {
                if w[0] == 0.0 {
                    0.5 * w[1]
                } else {
                    (w[0] * w[1]).sqrt()
                }
            })
            .collect();
        Ok(Self {
            nodes,
            edges,
            spacing: Spacing::Custom,
        })
    }

    /// Uniform panels of width `t_max / n` starting at the origin.
    pub fn uniform_from_origin(t_max: f64, n: usize) -> Result<Self> {
        let h = t_max / n as f64;
        Self::from_edges((0..=n).map(|k| h * k as f64).collect())
    }

    /// Concatenation of log-uniform panel runs through the given breakpoints,
    /// each run with `per_decade` panels per decade (at least one panel).
    /// Every breakpoint becomes a panel edge.
    pub fn log_panels_through(breakpoints: &[f64], per_decade: usize) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints[0] <= 0.0 {
            return Err(Error::InvalidGrid("need >= 2 positive breakpoints".into()));
        }
        let mut edges = vec![breakpoints[0]];
        for w in breakpoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b > a) {
                return Err(Error::InvalidGrid("breakpoints must increase".into()));
            }
            let k = (((b / a).log10() * per_decade as f64).ceil() as usize).max(1);
            let r = (b / a).ln() / k as f64;
            for j in 1..k {
                edges.push(a * (r * j as f64).exp());
            }
            edges.push(b);
        }
        Self::from_edges(edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn t_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn span(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn panel(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn spec(&self) -> TimeGridSpec {
        TimeGridSpec {
            t_min: self.t_min(),
            t_max: self.t_max(),
            n: self.len(),
            spacing: self.spacing,
        }
    }

    /// Index of the panel containing `t` (the left one on a shared edge).
    pub fn panel_of(&self, t: f64) -> Option<usize> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let k = self.edges.partition_point(|&e| e < t);
        Some(k.saturating_sub(1).min(self.len() - 1))
    }

    /// `int t^beta dt` over every panel, in closed form.
    pub fn panel_weights(&self, beta: f64) -> Result<Vec<f64>> {
        self.edges
            .windows(2)
            .map(|w| power_integral(w[0], w[1], beta))
            .collect()
    }

    /// Same as [`panel_weights`](Self::panel_weights) restricted to the part
    /// of each panel inside `[lo, hi]`.
    pub fn clipped_weights(&self, beta: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
        self.edges
            .windows(2)
            .map(|w| {
                let a = w[0].max(lo);
                let b = w[1].min(hi);
                if b > a {
                    power_integral(a, b, beta)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }
}

/// `int_a^b t^beta dt` for `0 <= a < b`.
pub fn power_integral(a: f64, b: f64, beta: f64) -> Result<f64> {
    let p = beta + 1.0;
    if a == 0.0 {
        if p <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "t^{beta} is not integrable at the origin"
            )));
        }
        return Ok(b.powf(p) / p);
    }
    let r = (b / a).ln();
    if p == 0.0 {
        return Ok(r);
    }
    // a^p (e^{p r} - 1) / p, stable as p -> 0
    Ok(a.powf(p) * (p * r).exp_m1() / p)
}

/// Values of `f : (0, inf) -> C^n` on the panels of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Arc<TimeGrid>,
    dim: usize,
    values: Vec<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub beta: f64,
    pub value: f64,
}

impl GridFunction {
    pub fn zeros(grid: Arc<TimeGrid>, dim: usize) -> Self {
        let n = grid.len();
        Self {
            grid,
            dim,
            values: vec![ZERO; n * dim],
        }
    }

    pub fn from_values(grid: Arc<TimeGrid>, dim: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * dim,
                got: values.len(),
            });
        }
        if let Some(k) = values
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite {
                row: k / dim.max(1),
                col: k % dim.max(1),
            });
        }
        Ok(Self { grid, dim, values })
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(grid: Arc<TimeGrid>, dim: usize, f: impl Fn(f64) -> CVec) -> Self {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for &t in grid.nodes() {
            let v = f(t);
            assert_eq!(v.len(), dim, "sample has wrong dimension");
            values.extend(v.iter().copied());
        }
        Self { grid, dim, values }
    }

    /// Panel averages of `f`, by 8-point Gauss-Legendre per panel.
    pub fn from_panel_average(grid: Arc<TimeGrid>, dim: usize, f: impl Fn(f64) -> CVec) -> Self {
        let rule = crate::quadrature::GaussLegendre::new(8);
        let mut values = Vec::with_capacity(grid.len() * dim);
        for i in 0..grid.len() {
            let (a, b) = grid.panel(i);
            let mut acc = CVec::zeros(dim);
            rule.for_each(a, b, |t, w| acc += f(t) * linalg::c(w));
            values.extend(acc.iter().map(|z| z / (b - a)));
        }
        Self { grid, dim, values }
    }

    pub fn constant(grid: Arc<TimeGrid>, w: &CVec) -> Self {
        let dim = w.len();
        Self::from_fn(grid, dim, |_| w.clone())
    }

    /// `w` on every panel whose node lies in `[lo, hi]`, zero elsewhere.
    pub fn indicator(grid: Arc<TimeGrid>, lo: f64, hi: f64, w: &CVec) -> Self {
        let dim = w.len();
        let zero = CVec::zeros(dim);
        Self::from_fn(grid, dim, |t| {
            if t >= lo && t <= hi {
                w.clone()
            } else {
                zero.clone()
            }
        })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn value(&self, i: usize) -> &[C64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value_vec(&self, i: usize) -> CVec {
        CVec::from_column_slice(self.value(i))
    }

    pub fn set_value(&mut self, i: usize, v: &[C64]) {
        self.values[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
    }

    pub fn pointwise_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| linalg::vec_norm(self.value(i)))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| *z == ZERO)
    }

    /// Index range of panels carrying a nonzero value.
    pub fn support(&self) -> Option<(usize, usize)> {
        let norms = self.pointwise_norms();
        let first = norms.iter().position(|&x| x > 0.0)?;
        let last = norms.iter().rposition(|&x| x > 0.0)?;
        Some((first, last))
    }

    pub fn map_panels(&self, f: impl Fn(usize, &[C64]) -> CVec) -> GridFunction {
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.len() {
            out.extend(f(i, self.value(i)).iter().copied());
        }
        GridFunction {
            grid: self.grid.clone(),
            dim: self.dim,
            values: out,
        }
    }

    pub fn axpy(&self, alpha: C64, other: &GridFunction) -> GridFunction {
        assert_eq!(self.values.len(), other.values.len());
        GridFunction {
            grid: self.grid.clone(),
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    /// `(sum_i |f_i|^2 int_{panel i} t^beta dt)^{1/2}`.
    pub fn weighted_norm(&self, beta: f64) -> Result<WeightedNorm> {
        self.weighted_norm_scaled(0.0, beta)
    }

    /// Norm of `t^gamma f(t)` in `L^2(t^beta dt)`, with the power factor
    /// integrated exactly on each panel rather than sampled.
    pub fn weighted_norm_scaled(&self, gamma: f64, beta: f64) -> Result<WeightedNorm> {
        let w = self.grid.panel_weights(2.0 * gamma + beta)?;
        Ok(WeightedNorm {
            beta,
            value: self.sum_weighted_sq(&w).sqrt(),
        })
    }

    /// Weighted norm restricted to `[lo, hi]`.
    pub fn weighted_norm_on(&self, beta: f64, lo: f64, hi: f64) -> Result<WeightedNorm> {
        let w = self.grid.clipped_weights(beta, lo, hi)?;
        Ok(WeightedNorm {
            beta,
            value: self.sum_weighted_sq(&w).sqrt(),
        })
    }

    fn sum_weighted_sq(&self, w: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| w[i] * self.value(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// CSV rows `t, re(f_1..f_n), im(f_1..f_n)`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 0..self.dim {
            s.push_str(&format!(",re_f{}", k + 1));
        }
        for k in 0..self.dim {
            s.push_str(&format!(",im_f{}", k + 1));
        }
        s.push('\n');
        for (i, &t) in self.grid.nodes().iter().enumerate() {
            s.push_str(&crate::report::fmt(t));
            for z in self.value(i) {
                s.push(',');
                s.push_str(&crate::report::fmt(z.re));
            }
            for z in self.value(i) {
                s.push(',');
                s.push_str(&crate::report::fmt(z.im));
            }
            s.push('\n');
        }
        s
    }
}

/// `int_0^inf h(u) du/u` from samples on a log grid, with power-law tail
/// estimates at both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchurBound {
    pub value: f64,
    pub interior: f64,
    pub lower_tail: f64,
    pub upper_tail: f64,
    pub divergent: bool,
}

pub fn schur_bound(u: &[f64], h: &[f64]) -> Result<SchurBound> {
    if u.len() != h.len() || u.len() < 3 {
        return Err(Error::Degenerate(
            "schur_bound needs >= 3 matching samples".into(),
        ));
    }
    if u.windows(2).any(|w| !(w[1] > w[0])) || u[0] <= 0.0 {
        return Err(Error::InvalidGrid(
            "ratio grid must be positive and increasing".into(),
        ));
    }
    if h.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Degenerate("h must be nonnegative".into()));
    }
    let lu: Vec<f64> = u.iter().map(|x| x.ln()).collect();
    let interior: f64 = (0..u.len() - 1)
        .map(|k| 0.5 * (h[k] + h[k + 1]) * (lu[k + 1] - lu[k]))
        .sum();

    // Local exponent p in h ~ u^p at each end.
    let slope = |i: usize, j: usize| -> Option<f64> {
        if h[i] > 0.0 && h[j] > 0.0 {
            Some((h[j].ln() - h[i].ln()) / (lu[j] - lu[i]))
        } else {
            None
        }
    };
    let n = u.len();
    let (lower_tail, lower_div) = if h[0] == 0.0 {
        (0.0, false)
    } else {
        match slope(0, 1) {
            Some(p) if p > 1e-3 => (h[0] / p, false),
            _ => (f64::INFINITY, true),
        }
    };
    let (upper_tail, upper_div) = if h[n - 1] == 0.0 {
        (0.0, false)
    } else {
        match slope(n - 2, n - 1) {
            Some(p) if p < -1e-3 => (h[n - 1] / -p, false),
            _ => (f64::INFINITY, true),
        }
    };
    let divergent = lower_div || upper_div;
    Ok(SchurBound {
        value: if divergent {
            f64::INFINITY
        } else {
            interior + lower_tail + upper_tail
        },
        interior,
        lower_tail,
        upper_tail,
        divergent,
    })
}

/// `||U(1, x)||` for ratios `x = s/t`, where
/// `U(t, s) = A e^{-(t-s)A} (t^alpha - s^alpha) s^{1/2-alpha} t^{1/2}`,
/// and the log-log slope of the profile as `x -> 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelProfile {
    pub ratios: Vec<f64>,
    pub norms: Vec<f64>,
    pub small_ratio_slope: f64,
}

pub fn kernel_profile_u(a: &Operator, alpha: f64, ratios: &[f64]) -> Result<KernelProfile> {
    if !(alpha < 0.5) || alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "alpha = beta/2 must satisfy alpha < 1/2, alpha != 0; got {alpha}"
        )));
    }
    if ratios.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::Domain("ratios must lie in (0, 1]".into()));
    }
    let sg = Semigroup::new(a);
    let norms: Vec<f64> = ratios
        .iter()
        .map(|&x| {
            let k = a.matrix() * &*sg.exp(1.0 - x);
            linalg::norm2(&k) * (1.0 - x.powf(alpha)).abs() * x.powf(0.5 - alpha)
        })
        .collect();
    // Fit on the smallest decade of the supplied ratios.
    let xmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let pts: Vec<(f64, f64)> = ratios
        .iter()
        .zip(&norms)
        .filter(|(&x, &v)| x <= xmin * 10.0 && v > 0.0)
        .map(|(&x, &v)| (x.ln(), v.ln()))
        .collect();
    let small_ratio_slope = least_squares_slope(&pts);
    Ok(KernelProfile {
        ratios: ratios.to_vec(),
        norms,
        small_ratio_slope,
    })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
