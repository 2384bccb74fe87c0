//! Python module `maxreg`.
//!
//! Matrices are nested lists of (possibly complex) numbers, row-major.

use std::sync::Arc;

use maxreg_core::fractional;
use maxreg_core::linalg::{CMat, CVec, C64};
use maxreg_core::maxreg::{self as mr, SweepTarget};
use maxreg_core::{random_accretive as core_random_accretive, Operator, TimeGrid};
use maxreg_lab::{Command, ExperimentConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn operator(rows: Vec<Vec<C64>>) -> PyResult<Operator> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = CMat::from_fn(n, n, |i, j| rows[i][j]);
    Operator::new(m).map_err(err)
}

fn rows_of(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn log_grid(t_min: f64, t_max: f64, n: usize) -> PyResult<Arc<TimeGrid>> {
    Ok(Arc::new(TimeGrid::log_grid(t_min, t_max, n).map_err(err)?))
}

/// Seeded random accretive matrix with numerical-range margin `margin`.
#[pyfunction]
fn random_accretive(dim: usize, margin: f64, seed: u64) -> PyResult<Vec<Vec<C64>>> {
    Ok(rows_of(
        core_random_accretive(dim, margin, seed)
            .map_err(err)?
            .matrix(),
    ))
}

/// `e^{-tA}`.
#[pyfunction]
fn semigroup(a: Vec<Vec<C64>>, t: f64) -> PyResult<Vec<Vec<C64>>> {
    let a = operator(a)?;
    Ok(rows_of(
        &maxreg_core::expm_neg(&a, C64::from(t)).map_err(err)?,
    ))
}

/// `A^alpha` for `alpha` in `[-1, 1]`.
#[pyfunction]
fn frac_power(a: Vec<Vec<C64>>, alpha: f64) -> PyResult<Vec<Vec<C64>>> {
    let p = fractional::frac_power(&operator(a)?, alpha).map_err(err)?;
    Ok(rows_of(p.matrix()))
}

/// `|A^{*alpha} f| / |A^alpha f|`.
#[pyfunction]
fn kato_ratio(a: Vec<Vec<C64>>, alpha: f64, f: Vec<C64>) -> PyResult<f64> {
    fractional::kato_ratio(&operator(a)?, alpha, &CVec::from_vec(f)).map_err(err)
}

/// `tan(pi (1 + 2 alpha) / 4)`.
#[pyfunction]
fn kato_bound(alpha: f64) -> f64 {
    fractional::kato_bound(alpha)
}

/// Norm of `M+` (or `M-`) on `L^2(t^beta dt)` over a log grid.
#[pyfunction]
#[pyo3(signature = (a, beta=0.0, t_min=1e-4, t_max=1e4, n=512, minus=false))]
fn mplus_norm(
    a: Vec<Vec<C64>>,
    beta: f64,
    t_min: f64,
    t_max: f64,
    n: usize,
    minus: bool,
) -> PyResult<f64> {
    let a = operator(a)?;
    let grid = log_grid(t_min, t_max, n)?;
    let target = if minus {
        SweepTarget::Mminus
    } else {
        SweepTarget::Mplus
    };
    let op = target.assemble(&a, &grid).map_err(err)?;
    mr::weighted_opnorm(&op, beta).map_err(err)
}

type GrowthTable = (Vec<(f64, f64, f64)>, String);

/// Rows `(t_min, norm_sq, delta_per_decade)` of the sharpness experiment and
/// its verdict.
#[pyfunction]
#[pyo3(signature = (a, u, beta=1.0, decades=8))]
fn counterexample(a: Vec<Vec<C64>>, u: Vec<C64>, beta: f64, decades: u32) -> PyResult<GrowthTable> {
    let a = operator(a)?;
    let r = mr::counterexample_growth(&a, &CVec::from_vec(u), beta, &mr::decade_t_mins(decades))
        .map_err(err)?;
    let rows = r
        .rows
        .iter()
        .map(|g| (g.t_min, g.norm_sq, g.delta_per_decade))
        .collect();
    Ok((rows, r.verdict.to_string()))
}

/// Runs a subcommand of the batch driver in memory. Returns
/// `(passed, [(check, pass, detail)], {file: contents})`.
#[pyfunction]
#[pyo3(signature = (command, config=None))]
#[allow(clippy::type_complexity)]
fn run(
    py: Python<'_>,
    command: &str,
    config: Option<&str>,
) -> PyResult<(bool, Vec<(String, bool, String)>, Vec<(String, String)>)> {
    let cmd = Command::ALL
        .into_iter()
        .find(|c| c.name() == command)
        .ok_or_else(|| PyValueError::new_err(format!("unknown command {command}")))?;
    let cfg = match config {
        Some(text) => ExperimentConfig::parse(cmd, text).map_err(err)?,
        None => ExperimentConfig::defaults(cmd),
    };
    let out = py
        .detach(|| maxreg_lab::run(cmd, &cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let checks = out
        .checks
        .iter()
        .map(|c| (c.name.clone(), c.pass, c.detail.clone()))
        .collect();
    Ok((out.passed(), checks, out.files))
}

#[pymodule]
fn maxreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(random_accretive, m)?)?;
    m.add_function(wrap_pyfunction!(semigroup, m)?)?;
    m.add_function(wrap_pyfunction!(frac_power, m)?)?;
    m.add_function(wrap_pyfunction!(kato_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(kato_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mplus_norm, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
