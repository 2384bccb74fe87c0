//! Discrete Volterra operators on a [`TimeGrid`] and their compositions.
//!
//! Inputs and outputs are panel averages. For piecewise-constant `f` the
//! panel average of `M+ f` is exact:
//!
//! ```text
//! (M+ f)_i = sum_{j<i} phi1(D_i) E(a_i - b_j) A Phi(D_j) f_j + D_i A phi2(D_i) f_i
//! ```
//!
//! with `E(x) = e^{-xA}`, `Phi(x) = int_0^x E`, `phi1(x) = Phi(x)/x`, and the
//! product over the intermediate panels `E(a_i - b_j) = E(D_{i-1}) ... E(D_{j+1})`.
//! That product is never formed: applying the operator is a two-term
//! recursion over panels, O(N n^2), and so is applying its adjoint.
//! `M-` is the same recursion run backwards, and the Duhamel operator
//! `f -> int_0^t e^{-(t-s)A} f(s) ds` drops the leading `A`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, DenseMap, LinearMap, C64, ZERO};
use crate::operator::Operator;
use crate::semigroup::Semigroup;
use crate::timegrid::{GridFunction, TimeGrid};

/// `out += m x`
#[inline]
pub(crate) fn mv_add(m: &CMat, x: &[C64], out: &mut [C64]) {
    let n = m.nrows();
    for c in 0..m.ncols() {
        let xc = x[c];
        if xc == ZERO {
            continue;
        }
        for r in 0..n {
            out[r] += m[(r, c)] * xc;
        }
    }
}

/// `out += m^* x`
#[inline]
pub(crate) fn mhv_add(m: &CMat, x: &[C64], out: &mut [C64]) {
    for c in 0..m.ncols() {
        let mut s = ZERO;
        for r in 0..m.nrows() {
            s += m[(r, c)].conj() * x[r];
        }
        out[c] += s;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `int_0^t`
    Causal,
    /// `int_t^inf`
    Anticausal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Kernel `A e^{-|t-s|A}`.
    Generator,
    /// Kernel `e^{-(t-s)A}`.
    Semigroup,
}

/// Per-panel matrices of one Volterra recursion.
#[derive(Clone, Debug)]
pub struct PanelTable {
    pub direction: Direction,
    pub kernel: KernelKind,
    dim: usize,
    /// `E(D_i)`
    exp: Vec<CMat>,
    /// `phi1(D_i)`: averaging of the carried state over panel `i`.
    avg: Vec<CMat>,
    /// Contribution of panel `i` to the carried state.
    jump: Vec<CMat>,
    /// Diagonal block.
    diag: Vec<CMat>,
}

impl PanelTable {
    pub fn new(sg: &Semigroup, grid: &TimeGrid, direction: Direction, kernel: KernelKind) -> Self {
        let a = sg.matrix();
        let widths = grid.widths();
        let rows: Vec<(CMat, CMat, CMat, CMat)> = widths
            .par_iter()
            .map(|&d| {
                let t = sg.triple(d);
                let phi = t.phi1.map(|z| z * d);
                let psi = t.phi2.map(|z| z * d);
                let (jump, diag) = match kernel {
                    KernelKind::Generator => (a * &phi, a * &psi),
                    KernelKind::Semigroup => (phi, psi),
                };
                (t.exp.clone(), t.phi1.clone(), jump, diag)
            })
            .collect();
        let mut table = PanelTable {
            direction,
            kernel,
            dim: a.nrows(),
            exp: Vec::with_capacity(rows.len()),
            avg: Vec::with_capacity(rows.len()),
            jump: Vec::with_capacity(rows.len()),
            diag: Vec::with_capacity(rows.len()),
        };
        for (e, p, j, d) in rows {
            table.exp.push(e);
            table.avg.push(p);
            table.jump.push(j);
            table.diag.push(d);
        }
        table
    }

    pub fn len(&self) -> usize {
        self.exp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exp.is_empty()
    }

    /// Carried states at the panel edges: for the causal direction the value
    /// of the continuous output at `a_i` (index `i`, with index `N` at the
    /// right end); for the anticausal direction the value at `b_i` stored at
    /// index `i + 1`, with index 0 at the left end.
    pub fn edge_states(&self, x: &[C64]) -> Vec<C64> {
        let (n, np) = (self.dim, self.len());
        let mut s = vec![ZERO; (np + 1) * n];
        match self.direction {
            Direction::Causal => {
                for i in 0..np {
                    let (cur, next) = s.split_at_mut((i + 1) * n);
                    let y = &cur[i * n..];
                    let out = &mut next[..n];
                    mv_add(&self.exp[i], y, out);
                    mv_add(&self.jump[i], &x[i * n..(i + 1) * n], out);
                }
            }
            Direction::Anticausal => {
                for i in (0..np).rev() {
                    let (lo, hi) = s.split_at_mut((i + 1) * n);
                    let z = &hi[..n];
                    let out = &mut lo[i * n..];
                    mv_add(&self.exp[i], z, out);
                    mv_add(&self.jump[i], &x[i * n..(i + 1) * n], out);
                }
            }
        }
        s
    }

    /// Panel averages of the output.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim;
        let mut state = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        let mut step = |i: usize, state: &mut Vec<C64>, next: &mut Vec<C64>| {
            let xi = &x[i * n..(i + 1) * n];
            let yi = &mut y[i * n..(i + 1) * n];
            yi.fill(ZERO);
            mv_add(&self.avg[i], state, yi);
            mv_add(&self.diag[i], xi, yi);
            next.fill(ZERO);
            mv_add(&self.exp[i], state, next);
            mv_add(&self.jump[i], xi, next);
            std::mem::swap(state, next);
        };
        match self.direction {
            Direction::Causal => (0..self.len()).for_each(|i| step(i, &mut state, &mut next)),
            Direction::Anticausal => (0..self.len())
                .rev()
                .for_each(|i| step(i, &mut state, &mut next)),
        }
    }

    /// Euclidean adjoint of [`apply`](Self::apply).
    pub fn apply_adjoint(&self, z: &[C64], x: &mut [C64]) {
        let n = self.dim;
        let mut w = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        let mut step = |j: usize, w: &mut Vec<C64>, next: &mut Vec<C64>| {
            let zj = &z[j * n..(j + 1) * n];
            let xj = &mut x[j * n..(j + 1) * n];
            xj.fill(ZERO);
            mhv_add(&self.jump[j], w, xj);
            mhv_add(&self.diag[j], zj, xj);
            next.fill(ZERO);
            mhv_add(&self.exp[j], w, next);
            mhv_add(&self.avg[j], zj, next);
            std::mem::swap(w, next);
        };
        match self.direction {
            Direction::Causal => (0..self.len())
                .rev()
                .for_each(|j| step(j, &mut w, &mut next)),
            Direction::Anticausal => (0..self.len()).for_each(|j| step(j, &mut w, &mut next)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    Mplus,
    Mminus,
    /// `M+ (u A e^{-uA} .)`
    Tu(f64),
    Duhamel,
    Product,
    Custom(String),
}

#[derive(Clone, Debug)]
enum Repr {
    Volterra(Arc<PanelTable>),
    Dense(Arc<DenseMap>),
    /// The same `n x n` block on every panel.
    BlockDiag(Arc<CMat>),
    /// One scalar per panel.
    PanelScale(Arc<Vec<f64>>),
    /// `f -> (left_i * sum_j right_j f_j)_i`.
    Rank {
        left: Arc<Vec<CMat>>,
        right: Arc<Vec<CMat>>,
    },
    /// Applied right to left.
    Product(Vec<AssembledOperator>),
    Sum(Vec<(f64, AssembledOperator)>),
    Adjoint(Box<AssembledOperator>),
}

/// A discretized operator on `C^n`-valued panel functions. Block `(i, j)`
/// maps the value on panel `j` to the value on panel `i`.
#[derive(Clone, Debug)]
pub struct AssembledOperator {
    grid: Arc<TimeGrid>,
    dim: usize,
    /// Exponent of the `t^beta dt` measure the operator is normed under.
    pub measure_beta: f64,
    pub kind: OperatorKind,
    repr: Repr,
}

fn gate(a: &Operator) -> Result<()> {
    if a.matrix().iter().all(|z| *z == ZERO) {
        return Ok(());
    }
    a.require_analytic_generator().map(|_| ())
}

pub fn assemble_volterra(
    a: &Operator,
    grid: &Arc<TimeGrid>,
    direction: Direction,
    kernel: KernelKind,
) -> Result<AssembledOperator> {
    gate(a)?;
    let sg = Semigroup::new(a);
    let table = PanelTable::new(&sg, grid, direction, kernel);
    let kind = match (direction, kernel) {
        (Direction::Causal, KernelKind::Generator) => OperatorKind::Mplus,
        (Direction::Anticausal, KernelKind::Generator) => OperatorKind::Mminus,
        (Direction::Causal, KernelKind::Semigroup) => OperatorKind::Duhamel,
        (Direction::Anticausal, KernelKind::Semigroup) => {
            OperatorKind::Custom("anticausal semigroup".into())
        }
    };
    Ok(AssembledOperator {
        grid: grid.clone(),
        dim: a.dim(),
        measure_beta: 0.0,
        kind,
        repr: Repr::Volterra(Arc::new(table)),
    })
}

/// `f -> int_0^t A e^{-(t-s)A} f(s) ds`.
pub fn assemble_mplus(a: &Operator, grid: &Arc<TimeGrid>) -> Result<AssembledOperator> {
    assemble_volterra(a, grid, Direction::Causal, KernelKind::Generator)
}

/// `f -> int_t^inf A e^{-(s-t)A} f(s) ds`.
pub fn assemble_mminus(a: &Operator, grid: &Arc<TimeGrid>) -> Result<AssembledOperator> {
    assemble_volterra(a, grid, Direction::Anticausal, KernelKind::Generator)
}

/// `f -> int_0^t e^{-(t-s)A} f(s) ds`.
pub fn assemble_duhamel(a: &Operator, grid: &Arc<TimeGrid>) -> Result<AssembledOperator> {
    assemble_volterra(a, grid, Direction::Causal, KernelKind::Semigroup)
}

impl AssembledOperator {
    fn with(&self, kind: OperatorKind, repr: Repr) -> Self {
        AssembledOperator {
            grid: self.grid.clone(),
            dim: self.dim,
            measure_beta: self.measure_beta,
            kind,
            repr,
        }
    }

    pub fn zeros(grid: &Arc<TimeGrid>, dim: usize) -> Self {
        Self::block_diagonal(grid, &CMat::zeros(dim, dim))
    }

    /// `f -> m f(t)` on every panel.
    pub fn block_diagonal(grid: &Arc<TimeGrid>, m: &CMat) -> Self {
        AssembledOperator {
            grid: grid.clone(),
            dim: m.nrows(),
            measure_beta: 0.0,
            kind: OperatorKind::Custom("block diagonal".into()),
            repr: Repr::BlockDiag(Arc::new(m.clone())),
        }
    }

    /// Multiplication of panel `i` by `scale[i]`.
    pub fn panel_scale(grid: &Arc<TimeGrid>, dim: usize, scale: Vec<f64>) -> Self {
        assert_eq!(scale.len(), grid.len());
        AssembledOperator {
            grid: grid.clone(),
            dim,
            measure_beta: 0.0,
            kind: OperatorKind::Custom("panel scale".into()),
            repr: Repr::PanelScale(Arc::new(scale)),
        }
    }

    /// `f -> (left_i sum_j right_j f_j)_i`.
    pub fn rank_form(grid: &Arc<TimeGrid>, left: Vec<CMat>, right: Vec<CMat>) -> Self {
        let dim = left.first().map_or(0, |m| m.nrows());
        AssembledOperator {
            grid: grid.clone(),
            dim,
            measure_beta: 0.0,
            kind: OperatorKind::Custom("rank form".into()),
            repr: Repr::Rank {
                left: Arc::new(left),
                right: Arc::new(right),
            },
        }
    }

    pub fn from_dense(grid: &Arc<TimeGrid>, dim: usize, blocks: DenseMap) -> Result<Self> {
        let size = grid.len() * dim;
        if blocks.rows != size || blocks.cols != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                got: blocks.rows,
            });
        }
        Ok(AssembledOperator {
            grid: grid.clone(),
            dim,
            measure_beta: 0.0,
            kind: OperatorKind::Custom("dense".into()),
            repr: Repr::Dense(Arc::new(blocks)),
        })
    }

    pub fn with_kind(mut self, kind: OperatorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_measure(mut self, beta: f64) -> Self {
        self.measure_beta = beta;
        self
    }

    /// `self * other`.
    pub fn then_after(&self, other: &AssembledOperator) -> Self {
        assert_eq!(self.size(), other.size());
        self.with(
            OperatorKind::Product,
            Repr::Product(vec![self.clone(), other.clone()]),
        )
    }

    pub fn product(ops: &[AssembledOperator]) -> Self {
        assert!(!ops.is_empty());
        ops[0].with(OperatorKind::Product, Repr::Product(ops.to_vec()))
    }

    /// `sum_k c_k op_k`.
    pub fn linear_combination(terms: Vec<(f64, AssembledOperator)>) -> Self {
        assert!(!terms.is_empty());
        let first = terms[0].1.clone();
        first.with(OperatorKind::Custom("sum".into()), Repr::Sum(terms))
    }

    /// Euclidean adjoint of the coefficient map.
    pub fn adjoint(&self) -> Self {
        self.with(
            OperatorKind::Custom("adjoint".into()),
            Repr::Adjoint(Box::new(self.clone())),
        )
    }

    /// Adjoint with respect to the `L^2(t^beta dt)` pairing of panel functions:
    /// `W^{-1} B^* W` with `W` the panel weights.
    pub fn weighted_adjoint(&self, beta: f64) -> Result<Self> {
        let w = self.grid.panel_weights(beta)?;
        let inv: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
        Ok(Self::product(&[
            Self::panel_scale(&self.grid, self.dim, inv),
            self.adjoint(),
            Self::panel_scale(&self.grid, self.dim, w),
        ]))
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.grid.len() * self.dim
    }

    pub fn panel_table(&self) -> Option<&PanelTable> {
        match &self.repr {
            Repr::Volterra(t) => Some(t),
            _ => None,
        }
    }

    pub fn apply_fn(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.dim() != self.dim || f.len() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                got: f.as_slice().len(),
            });
        }
        let mut y = vec![ZERO; self.size()];
        self.apply(f.as_slice(), &mut y);
        GridFunction::from_values(self.grid.clone(), self.dim, y)
    }

    /// The full block matrix, column by column.
    pub fn blocks(&self) -> DenseMap {
        if let Repr::Dense(d) = &self.repr {
            return (**d).clone();
        }
        let m = self.size();
        let cols: Vec<Vec<C64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![ZERO; m];
                e[j] = linalg::ONE;
                let mut y = vec![ZERO; m];
                self.apply(&e, &mut y);
                y
            })
            .collect();
        let mut d = DenseMap::zeros(m, m);
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                *d.get_mut(i, j) = *v;
            }
        }
        d
    }

    /// Block `(i, j)` extracted from a materialized matrix.
    pub fn block_of(dense: &DenseMap, dim: usize, i: usize, j: usize) -> CMat {
        CMat::from_fn(dim, dim, |r, c| dense.get(i * dim + r, j * dim + c))
    }

    pub fn to_dense(&self) -> Self {
        self.with(self.kind.clone(), Repr::Dense(Arc::new(self.blocks())))
    }

    /// Norm in `L^2(t^beta dt)` with `beta = measure_beta`.
    pub fn opnorm(&self) -> Result<f64> {
        weighted_opnorm(self, self.measure_beta)
    }
}

impl LinearMap for AssembledOperator {
    fn nrows(&self) -> usize {
        self.size()
    }

    fn ncols(&self) -> usize {
        self.size()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim;
        match &self.repr {
            Repr::Volterra(t) => t.apply(x, y),
            Repr::Dense(d) => d.apply(x, y),
            Repr::BlockDiag(m) => {
                for (xi, yi) in x.chunks(n).zip(y.chunks_mut(n)) {
                    yi.fill(ZERO);
                    mv_add(m, xi, yi);
                }
            }
            Repr::PanelScale(s) => {
                for (k, (xi, yi)) in x.chunks(n).zip(y.chunks_mut(n)).enumerate() {
                    for (a, b) in xi.iter().zip(yi.iter_mut()) {
                        *b = a * s[k];
                    }
                }
            }
            Repr::Rank { left, right } => {
                let mut g = vec![ZERO; n];
                for (xi, r) in x.chunks(n).zip(right.iter()) {
                    mv_add(r, xi, &mut g);
                }
                for (yi, l) in y.chunks_mut(n).zip(left.iter()) {
                    yi.fill(ZERO);
                    mv_add(l, &g, yi);
                }
            }
            Repr::Product(ops) => {
                let mut cur = x.to_vec();
                let mut tmp = vec![ZERO; x.len()];
                for op in ops.iter().rev() {
                    op.apply(&cur, &mut tmp);
                    std::mem::swap(&mut cur, &mut tmp);
                }
                y.copy_from_slice(&cur);
            }
            Repr::Sum(terms) => {
                y.fill(ZERO);
                let mut tmp = vec![ZERO; y.len()];
                for (c, op) in terms {
                    op.apply(x, &mut tmp);
                    for (a, b) in y.iter_mut().zip(&tmp) {
                        *a += b * *c;
                    }
                }
            }
            Repr::Adjoint(op) => op.apply_adjoint(x, y),
        }
    }

    fn apply_adjoint(&self, y: &[C64], x: &mut [C64]) {
        let n = self.dim;
        match &self.repr {
            Repr::Volterra(t) => t.apply_adjoint(y, x),
            Repr::Dense(d) => d.apply_adjoint(y, x),
            Repr::BlockDiag(m) => {
                for (yi, xi) in y.chunks(n).zip(x.chunks_mut(n)) {
                    xi.fill(ZERO);
                    mhv_add(m, yi, xi);
                }
            }
            Repr::PanelScale(_) => self.apply(y, x),
            Repr::Rank { left, right } => {
                let mut g = vec![ZERO; n];
                for (yi, l) in y.chunks(n).zip(left.iter()) {
                    mhv_add(l, yi, &mut g);
                }
                for (xi, r) in x.chunks_mut(n).zip(right.iter()) {
                    xi.fill(ZERO);
                    mhv_add(r, &g, xi);
                }
            }
            Repr::Product(ops) => {
                let mut cur = y.to_vec();
                let mut tmp = vec![ZERO; y.len()];
                for op in ops.iter() {
                    op.apply_adjoint(&cur, &mut tmp);
                    std::mem::swap(&mut cur, &mut tmp);
                }
                x.copy_from_slice(&cur);
            }
            Repr::Sum(terms) => {
                x.fill(ZERO);
                let mut tmp = vec![ZERO; x.len()];
                for (c, op) in terms {
                    op.apply_adjoint(y, &mut tmp);
                    for (a, b) in x.iter_mut().zip(&tmp) {
                        *a += b * *c;
                    }
                }
            }
            Repr::Adjoint(op) => op.apply(y, x),
        }
    }
}

/// `W^{1/2} B W^{-1/2}` for panel weights `W`.
struct Weighted<'a> {
    op: &'a AssembledOperator,
    sqrt_w: Vec<f64>,
}

impl Weighted<'_> {
    fn scale(&self, x: &[C64], out: &mut [C64], inverse: bool) {
        let n = self.op.dim;
        for (k, (xi, oi)) in x.chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let s = if inverse {
                1.0 / self.sqrt_w[k]
            } else {
                self.sqrt_w[k]
            };
            for (a, b) in xi.iter().zip(oi.iter_mut()) {
                *b = a * s;
            }
        }
    }
}

impl LinearMap for Weighted<'_> {
    fn nrows(&self) -> usize {
        self.op.size()
    }
    fn ncols(&self) -> usize {
        self.op.size()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let mut t = vec![ZERO; x.len()];
        self.scale(x, &mut t, true);
        self.op.apply(&t, y);
        t.copy_from_slice(y);
        self.scale(&t, y, false);
    }
    fn apply_adjoint(&self, y: &[C64], x: &mut [C64]) {
        let mut t = vec![ZERO; y.len()];
        self.scale(y, &mut t, false);
        self.op.apply_adjoint(&t, x);
        t.copy_from_slice(x);
        self.scale(&t, x, true);
    }
}

/// Relative tolerance of the norm estimates.
pub const OPNORM_RTOL: f64 = 1e-10;

/// Operator norm on `L^2(t^beta dt)` of panel functions: the largest singular
/// value of `W^{1/2} B W^{-1/2}` with `W_i = int_{panel i} t^beta dt`.
pub fn weighted_opnorm(op: &AssembledOperator, beta: f64) -> Result<f64> {
    let w = op.grid.panel_weights(beta)?;
    Ok(weighted_opnorm_with(op, &w))
}

/// Same as [`weighted_opnorm`] with explicit panel weights.
pub fn weighted_opnorm_with(op: &AssembledOperator, weights: &[f64]) -> f64 {
    let map = Weighted {
        op,
        sqrt_w: weights.iter().map(|x| x.sqrt()).collect(),
    };
    linalg::spectral_norm(&map, OPNORM_RTOL)
}

/// Pointwise values of a Volterra operator applied to piecewise-constant `f`.
pub struct PointEvaluator<'a> {
    sg: Semigroup,
    table: &'a PanelTable,
    grid: Arc<TimeGrid>,
    f: &'a GridFunction,
    states: Vec<C64>,
}

impl<'a> PointEvaluator<'a> {
    pub fn new(a: &Operator, op: &'a AssembledOperator, f: &'a GridFunction) -> Result<Self> {
        let table = op
            .panel_table()
            .ok_or_else(|| Error::Domain("pointwise values need a Volterra operator".into()))?;
        if f.dim() != op.dim() || f.len() != op.grid().len() {
            return Err(Error::DimensionMismatch {
                expected: op.size(),
                got: f.as_slice().len(),
            });
        }
        Ok(Self {
            sg: Semigroup::new(a),
            table,
            grid: op.grid().clone(),
            f,
            states: table.edge_states(f.as_slice()),
        })
    }

    fn state(&self, k: usize) -> CVec {
        let n = self.table.dim;
        CVec::from_column_slice(&self.states[k * n..(k + 1) * n])
    }

    fn partial(&self, x: f64) -> (CMat, CMat) {
        let t = self.sg.triple(x);
        let phi = t.phi1.map(|z| z * x);
        let jump = match self.table.kernel {
            KernelKind::Generator => self.sg.matrix() * phi,
            KernelKind::Semigroup => phi,
        };
        (t.exp.clone(), jump)
    }

    /// Value of the continuous output at time `t > 0`.
    pub fn at(&self, t: f64) -> CVec {
        let (lo, hi) = self.grid.span();
        let np = self.grid.len();
        let n = self.table.dim;
        match self.table.direction {
            Direction::Causal => {
                if t <= lo {
                    return CVec::zeros(n);
                }
                if t >= hi {
                    return &*self.sg.exp(t - hi) * self.state(np);
                }
                let i = self.grid.panel_of(t).expect("inside span");
                let (a, _) = self.grid.panel(i);
                let (e, j) = self.partial(t - a);
                e * self.state(i) + j * self.f.value_vec(i)
            }
            Direction::Anticausal => {
                if t >= hi {
                    return CVec::zeros(n);
                }
                if t <= lo {
                    return &*self.sg.exp(lo - t) * self.state(0);
                }
                let i = self.grid.panel_of(t).expect("inside span");
                let (_, b) = self.grid.panel(i);
                let (e, j) = self.partial(b - t);
                e * self.state(i + 1) + j * self.f.value_vec(i)
            }
        }
    }

    /// Values at the grid nodes.
    pub fn at_nodes(&self) -> GridFunction {
        let vals: Vec<CVec> = self.grid.nodes().par_iter().map(|&t| self.at(t)).collect();
        let flat = vals.iter().flat_map(|v| v.iter().copied()).collect();
        GridFunction::from_values(self.grid.clone(), self.table.dim, flat).expect("shape matches")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff};
    use crate::operator::random_accretive;

    fn scalar(l: f64) -> Operator {
        Operator::from_real(&[&[l]]).unwrap()
    }

    fn ones(grid: &Arc<TimeGrid>, n: usize) -> GridFunction {
        GridFunction::constant(grid.clone(), &CVec::from_element(n, c(1.0)))
    }

    #[test]
    fn zero_operator_assembles_to_zero() {
        let g = Arc::new(TimeGrid::log_grid(1e-2, 1e2, 30).unwrap());
        let z = Operator::from_real(&[&[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        for op in [
            assemble_mplus(&z, &g).unwrap(),
            assemble_mminus(&z, &g).unwrap(),
        ] {
            assert!(op.blocks().data.iter().all(|x| *x == ZERO));
            assert_eq!(weighted_opnorm(&op, 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn skew_generator_is_rejected() {
        let g = Arc::new(TimeGrid::log_grid(1e-2, 1e2, 10).unwrap());
        let skew = Operator::from_real(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        assert!(matches!(
            assemble_mplus(&skew, &g),
            Err(Error::NotSectorial { .. })
        ));
    }

    #[test]
    fn constant_input_from_origin_matches_closed_form() {
        let g = Arc::new(TimeGrid::uniform_from_origin(10.0, 64).unwrap());
        for lambda in [0.3, 1.0, 5.0] {
            let a = scalar(lambda);
            let op = assemble_mplus(&a, &g).unwrap();
            let f = ones(&g, 1);
            let ev = PointEvaluator::new(&a, &op, &f).unwrap();
            for &t in g.nodes() {
                let v = ev.at(t)[0];
                assert!(
                    (v.re - (1.0 - (-lambda * t).exp())).abs() < 1e-12,
                    "{lambda} {t}"
                );
            }
            // panel averages are exact too
            let avg = op.apply_fn(&f).unwrap();
            for i in 0..g.len() {
                let (a0, b0) = g.panel(i);
                let exact =
                    1.0 - ((-lambda * a0).exp() - (-lambda * b0).exp()) / (lambda * (b0 - a0));
                assert!((avg.value(i)[0].re - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indicator_input_matches_brute_force() {
        let g = Arc::new(TimeGrid::log_panels_through(&[1e-2, 1.0, 2.0, 20.0], 32).unwrap());
        let a = scalar(1.0);
        let f = GridFunction::indicator(g.clone(), 1.0, 2.0, &CVec::from_element(1, c(1.0)));
        let ev_op = assemble_mplus(&a, &g).unwrap();
        let ev = PointEvaluator::new(&a, &ev_op, &f).unwrap();
        let brute = |t: f64| {
            // trapezoid with 1e5 points on [1, min(t, 2)]
            let hi = t.min(2.0);
            if hi <= 1.0 {
                return 0.0;
            }
            let m = 100_000;
            let h = (hi - 1.0) / m as f64;
            let k = |s: f64| (-(t - s)).exp();
            (0..=m)
                .map(|q| {
                    let w = if q == 0 || q == m { 0.5 } else { 1.0 };
                    w * k(1.0 + h * q as f64)
                })
                .sum::<f64>()
                * h
        };
        for t in [0.5, 1.3, 1.9, 2.5, 7.0] {
            assert!((ev.at(t)[0].re - brute(t)).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn mminus_counterexample_closed_form() {
        let g = Arc::new(TimeGrid::log_panels_through(&[1e-6, 1.0, 2.0, 10.0], 16).unwrap());
        let a = scalar(1.0);
        let f = GridFunction::indicator(g.clone(), 1.0, 2.0, &CVec::from_element(1, c(1.0)));
        let op = assemble_mminus(&a, &g).unwrap();
        let ev = PointEvaluator::new(&a, &op, &f).unwrap();
        for t in [1e-6f64, 0.01, 0.5, 0.99] {
            let exact = (-(1.0 - t)).exp() - (-(2.0 - t)).exp();
            assert!((ev.at(t)[0].re - exact).abs() < 1e-13);
        }
        let e = (-1.0f64).exp() - (-2.0f64).exp();
        assert!((ev.at(1e-12)[0].re - e).abs() < 1e-11);
        assert!((e - 0.232_544_157_934_830_6).abs() < 1e-15);
    }

    #[test]
    fn adjoint_apply_is_consistent() {
        let g = Arc::new(TimeGrid::log_grid(1e-3, 1e2, 40).unwrap());
        let a = random_accretive(3, 0.1, 3).unwrap();
        for op in [
            assemble_mplus(&a, &g).unwrap(),
            assemble_mminus(&a, &g).unwrap(),
            assemble_duhamel(&a, &g).unwrap(),
        ] {
            let dense = op.blocks();
            let dh = dense.to_cmat().adjoint();
            let adj = op.adjoint().blocks().to_cmat();
            assert!(max_abs_diff(&dh, &adj) < 1e-13 * (1.0 + linalg::norm2(&dh)));
        }
    }

    #[test]
    fn triangular_structure() {
        let g = Arc::new(TimeGrid::log_grid(1e-2, 1e2, 12).unwrap());
        let a = random_accretive(2, 0.1, 1).unwrap();
        let p = assemble_mplus(&a, &g).unwrap().blocks();
        let m = assemble_mminus(&a, &g).unwrap().blocks();
        for i in 0..12 {
            for j in 0..12 {
                let bp = AssembledOperator::block_of(&p, 2, i, j);
                let bm = AssembledOperator::block_of(&m, 2, i, j);
                if j > i {
                    assert!(bp.iter().all(|z| *z == ZERO));
                }
                if j < i {
                    assert!(bm.iter().all(|z| *z == ZERO));
                }
            }
        }
    }

    #[test]
    fn annihilates_null_space() {
        let g = Arc::new(TimeGrid::log_grid(1e-3, 1e3, 50).unwrap());
        let a = Operator::diagonal(&[0.0, 2.0]);
        let f = GridFunction::constant(g.clone(), &CVec::from_vec(vec![c(1.0), c(0.0)]));
        let out = assemble_mplus(&a, &g).unwrap().apply_fn(&f).unwrap();
        assert!(out.as_slice().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn duhamel_times_a_is_mplus() {
        let g = Arc::new(TimeGrid::log_grid(1e-3, 1e2, 60).unwrap());
        let a = random_accretive(2, 0.2, 9).unwrap();
        let f = GridFunction::from_fn(g.clone(), 2, |t| {
            CVec::from_vec(vec![c(t.sin()), C64::new(0.0, (-t).exp())])
        });
        let v = assemble_duhamel(&a, &g).unwrap().apply_fn(&f).unwrap();
        let m = assemble_mplus(&a, &g).unwrap().apply_fn(&f).unwrap();
        for i in 0..g.len() {
            let av = a.matrix() * v.value_vec(i);
            assert!((av - m.value_vec(i)).norm() < 1e-12 * (1.0 + m.value_vec(i).norm()));
        }
    }
}
