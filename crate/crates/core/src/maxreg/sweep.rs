//! Refinement studies of the weighted norms of `M+` and `M-`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVec};
use crate::operator::Operator;
use crate::report::{csv_table, fmt};
use crate::semigroup::Semigroup;
use crate::timegrid::{GridFunction, TimeGrid};

use super::assemble::{assemble_mminus, assemble_mplus, weighted_opnorm, AssembledOperator};

/// A refinement that changes the norm by at most this factor counts as stable.
pub const STABILIZATION_RATIO: f64 = 1.05;
/// Minimal relative increase of the squared norm per decade of `t_min` for growth.
pub const GROWTH_PER_DECADE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Growing,
    /// Neither stable nor growing fast enough to call.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Bounded => "bounded",
            Verdict::Growing => "growing",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepTarget {
    Mplus,
    Mminus,
}

impl SweepTarget {
    pub fn assemble(self, a: &Operator, grid: &Arc<TimeGrid>) -> Result<AssembledOperator> {
        match self {
            SweepTarget::Mplus => assemble_mplus(a, grid),
            SweepTarget::Mminus => assemble_mminus(a, grid),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub norm: f64,
    /// Norm over the norm on the previous grid; NaN on the coarsest grid.
    pub refinement_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<(f64, Verdict)>,
}

impl SweepReport {
    pub fn verdict(&self, beta: f64) -> Option<Verdict> {
        self.verdicts
            .iter()
            .find(|(b, _)| *b == beta)
            .map(|(_, v)| *v)
    }

    /// Ratio of the last refinement for `beta`.
    pub fn final_ratio(&self, beta: f64) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.beta == beta)
            .map(|r| r.refinement_ratio)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let v = self.verdict(r.beta).expect("verdict for every beta");
                vec![
                    fmt(r.beta),
                    fmt(r.t_min),
                    fmt(r.t_max),
                    r.n.to_string(),
                    fmt(r.norm),
                    fmt(r.refinement_ratio),
                    v.to_string(),
                ]
            })
            .collect();
        csv_table(
            &[
                "beta",
                "t_min",
                "t_max",
                "N",
                "norm",
                "refinement_ratio",
                "verdict",
            ],
            &rows,
        )
    }
}

/// Tabulates the `L^2(t^beta dt)` norm of `M+` or `M-` over a lattice of
/// grids ordered from coarse to fine. A beta is "bounded" when the last
/// refinement changes the norm by at most [`STABILIZATION_RATIO`].
pub fn beta_sweep(
    a: &Operator,
    betas: &[f64],
    grids: &[Arc<TimeGrid>],
    target: SweepTarget,
) -> Result<SweepReport> {
    if grids.len() < 2 {
        return Err(Error::InvalidGrid(
            "a sweep needs at least two grids".into(),
        ));
    }
    for w in grids.windows(2) {
        if w[1].t_min() > w[0].t_min() || w[1].len() < w[0].len() {
            return Err(Error::InvalidGrid(
                "grids must be ordered by decreasing t_min and increasing N".into(),
            ));
        }
    }
    let ops: Vec<AssembledOperator> = grids
        .par_iter()
        .map(|g| target.assemble(a, g))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..betas.len())
        .flat_map(|b| (0..grids.len()).map(move |g| (b, g)))
        .collect();
    let norms: Vec<f64> = cells
        .par_iter()
        .map(|&(b, g)| weighted_opnorm(&ops[g], betas[b]))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..betas.len()).collect();
    order.sort_by(|&x, &y| betas[x].total_cmp(&betas[y]));
    let mut rows = Vec::with_capacity(cells.len());
    let mut verdicts = Vec::with_capacity(betas.len());
    for b in order {
        let mut prev = f64::NAN;
        for (g, grid) in grids.iter().enumerate() {
            let norm = norms[b * grids.len() + g];
            rows.push(SweepRow {
                beta: betas[b],
                t_min: grid.t_min(),
                t_max: grid.t_max(),
                n: grid.len(),
                norm,
                refinement_ratio: norm / prev,
            });
            prev = norm;
        }
        let last = rows.last().expect("at least two grids").refinement_ratio;
        let v = if last <= STABILIZATION_RATIO {
            Verdict::Bounded
        } else {
            Verdict::Growing
        };
        verdicts.push((betas[b], v));
    }
    Ok(SweepReport { rows, verdicts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t_min: f64,
    pub norm_sq: f64,
    /// Increase of `norm_sq` per decade of `t_min` since the previous row.
    pub delta_per_decade: f64,
}

/// Verdict on squared truncated norms tabulated for decreasing `t_min`.
///
/// Bounded when the norm itself changed by at most [`STABILIZATION_RATIO`]
/// per decade over the last step; growing when the squared norm increased at
/// every step and by at least [`GROWTH_PER_DECADE`] relative per decade over
/// the last step.
pub fn growth_verdict(rows: &[GrowthRow]) -> Verdict {
    if rows.len() < 2 {
        return Verdict::Inconclusive;
    }
    let (p, q) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
    let decades = (p.t_min / q.t_min).log10();
    if q.norm_sq <= p.norm_sq * STABILIZATION_RATIO.powf(2.0 * decades) {
        return Verdict::Bounded;
    }
    let monotone = rows.windows(2).all(|w| w[1].norm_sq > w[0].norm_sq);
    let rel = (q.norm_sq / p.norm_sq - 1.0) / decades;
    if monotone && rel >= GROWTH_PER_DECADE {
        Verdict::Growing
    } else {
        Verdict::Inconclusive
    }
}

pub(crate) fn growth_rows(t_mins: &[f64], norm_sq: &[f64]) -> Vec<GrowthRow> {
    let mut rows: Vec<GrowthRow> = Vec::with_capacity(t_mins.len());
    for (&t, &v) in t_mins.iter().zip(norm_sq) {
        let delta = rows
            .last()
            .map_or(f64::NAN, |p| (v - p.norm_sq) / (p.t_min / t).log10());
        rows.push(GrowthRow {
            t_min: t,
            norm_sq: v,
            delta_per_decade: delta,
        });
    }
    rows
}

pub fn growth_csv(rows: &[GrowthRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt(r.t_min), fmt(r.norm_sq), fmt(r.delta_per_decade)])
        .collect();
    csv_table(&["t_min", "norm_sq", "delta_per_decade"], &body)
}

/// Panels per decade of the counterexample grid.
pub const COUNTEREXAMPLE_PER_DECADE: usize = 64;
/// Right end of the counterexample grid; `M- f` vanishes beyond 2.
pub const COUNTEREXAMPLE_T_MAX: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub beta: f64,
    /// `|(e^{-A} - e^{-2A}) u|` for the projected, normalized `u`.
    pub claim_norm: f64,
    /// `|f|` in `L^2(t^{-beta} dt)`.
    pub f_norm: f64,
    pub rows: Vec<GrowthRow>,
    pub verdict: Verdict,
}

impl CounterexampleReport {
    pub fn to_csv(&self) -> String {
        growth_csv(&self.rows)
    }
}

/// `u` projected onto the range of `A` and normalized.
pub(crate) fn project_to_range(a: &Operator, u: &CVec) -> Result<CVec> {
    if u.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: u.len(),
        });
    }
    let p = linalg::range_projector(a.matrix(), 1e-10);
    let v = p * u;
    let n = v.norm();
    if !(n > 1e-12 * u.norm().max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate(
            "u has no component in the range of A".into(),
        ));
    }
    Ok(v / linalg::c(n))
}

/// Squared norms of `M- f`, `f = u` on `[1, 2]`, in `L^2(t^{-beta} dt)`
/// truncated to `[t_min, COUNTEREXAMPLE_T_MAX]` for each `t_min`.
///
/// `M-` is anticausal, so one grid through every `t_min` serves all of them.
pub fn counterexample_growth(
    a: &Operator,
    u: &CVec,
    beta: f64,
    t_mins: &[f64],
) -> Result<CounterexampleReport> {
    if t_mins.is_empty() || t_mins.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidGrid("t_mins must lie in (0, 1)".into()));
    }
    if t_mins.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidGrid("t_mins must decrease".into()));
    }
    let u = project_to_range(a, u)?;
    let sg = Semigroup::new(a);
    let claim = (&*sg.exp(1.0) - &*sg.exp(2.0)) * &u;
    let claim_norm = claim.norm();
    if claim_norm <= 1e-12 {
        return Err(Error::Degenerate("(e^{-A} - e^{-2A}) u vanishes".into()));
    }

    let mut breaks: Vec<f64> = t_mins.iter().rev().copied().collect();
    breaks.extend([1.0, 2.0, COUNTEREXAMPLE_T_MAX]);
    let grid = Arc::new(TimeGrid::log_panels_through(
        &breaks,
        COUNTEREXAMPLE_PER_DECADE,
    )?);
    let f = GridFunction::indicator(grid.clone(), 1.0, 2.0, &u);
    let g = assemble_mminus(a, &grid)?.apply_fn(&f)?;
    let norm_sq: Vec<f64> = t_mins
        .iter()
        .map(|&t| {
            g.weighted_norm_on(-beta, t, COUNTEREXAMPLE_T_MAX)
                .map(|w| w.value.powi(2))
        })
        .collect::<Result<_>>()?;
    let rows = growth_rows(t_mins, &norm_sq);
    Ok(CounterexampleReport {
        beta,
        claim_norm,
        f_norm: f.weighted_norm(-beta)?.value,
        verdict: growth_verdict(&rows),
        rows,
    })
}

/// `t_min = 10^{-1}, ..., 10^{-decades}`.
pub fn decade_t_mins(decades: u32) -> Vec<f64> {
    (1..=decades as i32).map(|k| 10f64.powi(-k)).collect()
}
