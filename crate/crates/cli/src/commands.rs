//! One function per subcommand.

use std::sync::Arc;

use maxreg_core::cauchy::{
    continuity_bound_check, duhamel_v, homogeneous, maxreg_identity_check, recover_trace,
    solve_ivp, VecJson,
};
use maxreg_core::cotlar::{
    calderon_window, dyadic_u_grid, orthogonality_report, pair_norms, range_kernel_split,
    reconstruction_error,
};
use maxreg_core::fractional::{kato_audit, kato_csv, KatoReport};
use maxreg_core::linalg::{c, C64};
use maxreg_core::maxreg::{beta_sweep, counterexample_growth, decade_t_mins, Verdict};
use maxreg_core::report::{csv_table, fmt};
use maxreg_core::rng::{self, cell_seed};
use maxreg_core::semigroup::{
    analyticity_constant, default_qe_grid, profile_csv, quadratic_estimate, semigroup_bound,
    semigroup_law_defect,
};
use maxreg_core::timegrid::TimeGridSpec;
use maxreg_core::{Operator, TimeGrid};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::build_grid;
use crate::output::to_json;
use crate::{Check, CliError, ExperimentConfig, Outcome};

fn operators(cfg: &ExperimentConfig) -> Result<Vec<Operator>, CliError> {
    cfg.operator.build()
}

fn seed(cfg: &ExperimentConfig) -> Result<u64, CliError> {
    cfg.seed
        .ok_or_else(|| CliError::Config("seed is required for sampled vectors".into()))
}

/// Prepends an `operator` column to a CSV table.
fn with_operator_column(index: usize, csv: &str, header: bool) -> String {
    let mut out = String::new();
    for (k, line) in csv.lines().enumerate() {
        if k == 0 {
            if header {
                out.push_str("operator,");
                out.push_str(line);
                out.push('\n');
            }
            continue;
        }
        out.push_str(&format!("{index},{line}\n"));
    }
    out
}

fn stack_tables(tables: &[String]) -> String {
    tables
        .iter()
        .enumerate()
        .map(|(i, t)| with_operator_column(i, t, i == 0))
        .collect()
}

pub fn semigroup(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ops = operators(cfg)?;
    let seed = seed(cfg)?;
    let grid = build_grid(&cfg.grid)?;
    let qe_grid = default_qe_grid();
    let sec = &cfg.semigroup;
    let tol = cfg.tolerances.semigroup_law;
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let mut out = Outcome::default();
    for (i, a) in ops.iter().enumerate() {
        a.require_analytic_generator()?;
        let law = (0..sec.law_pairs)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::seeded(cell_seed(seed, i as u64, k as u64));
                let t1: f64 = r.random_range(0.0..5.0);
                let t2: f64 = r.random_range(0.0..5.0);
                semigroup_law_defect(a, c(t1), c(t2))
            })
            .try_reduce(|| 0.0, |x, y| Ok(x.max(y)))?;
        let analyticity = analyticity_constant(a, &grid);
        let bound = semigroup_bound(a, &grid);
        let mut qe_ratio: f64 = 0.0;
        let mut qe_converged = true;
        for k in 0..sec.qe_vectors {
            let mut r = rng::seeded(cell_seed(seed, i as u64, (sec.law_pairs + k) as u64));
            let h = rng::unit_vector(&mut r, a.dim());
            let q = quadratic_estimate(a, &h, &qe_grid)?;
            qe_ratio = qe_ratio.max(q.value);
            qe_converged &= q.converged;
        }
        let pass = law <= tol && analyticity.is_finite() && bound.is_finite() && qe_converged;
        out.checks.push(Check::new(
            format!("operator {i}: semigroup law"),
            law <= tol,
            format!("max defect {} over {} pairs", fmt(law), sec.law_pairs),
        ));
        out.checks.push(Check::new(
            format!("operator {i}: analyticity constant"),
            analyticity.is_finite(),
            format!(
                "sup t|Ae^(-tA)| = {}, sup |e^(-tA)| = {}",
                fmt(analyticity),
                fmt(bound)
            ),
        ));
        out.checks.push(Check::new(
            format!("operator {i}: quadratic estimate"),
            qe_converged,
            format!("max over unit h = {}", fmt(qe_ratio)),
        ));
        rows.push(vec![
            i.to_string(),
            a.dim().to_string(),
            fmt(law),
            fmt(analyticity),
            fmt(bound),
            fmt(qe_ratio),
            qe_converged.to_string(),
            pass.to_string(),
        ]);
        profiles.push(profile_csv(a, &grid));
    }
    out.files.push((
        "semigroup.csv".into(),
        csv_table(
            &[
                "operator",
                "dim",
                "law_defect",
                "analyticity_constant",
                "semigroup_bound",
                "quadratic_estimate",
                "qe_converged",
                "pass",
            ],
            &rows,
        ),
    ));
    out.files
        .push(("profile.csv".into(), stack_tables(&profiles)));
    Ok(out)
}

pub fn kato(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ops = operators(cfg)?;
    let seed = seed(cfg)?;
    let per_op: Vec<(bool, Vec<KatoReport>)> = ops
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let r = kato_audit(a, &cfg.alphas, cfg.samples, cell_seed(seed, i as u64, 1))?;
            Ok((a.is_hermitian(), r))
        })
        .collect::<Result<_, CliError>>()?;
    let merge = |filter: &dyn Fn(bool) -> bool| -> Option<Vec<KatoReport>> {
        per_op
            .iter()
            .filter(|(h, _)| filter(*h))
            .map(|(_, r)| r.clone())
            .reduce(|acc, r| acc.iter().zip(&r).map(|(x, y)| x.merge(y)).collect())
    };
    let all = merge(&|_| true).unwrap_or_default();
    let mut out = Outcome::default();
    let rel = cfg.tolerances.kato_relative;
    for r in &all {
        out.checks.push(Check::new(
            format!("alpha {}: Kato inequality", r.alpha),
            r.worst_ratio <= r.bound * (1.0 + rel),
            format!(
                "worst ratio {} vs bound {} over {} samples",
                fmt(r.worst_ratio),
                fmt(r.bound),
                r.num_samples
            ),
        ));
    }
    if let Some(herm) = merge(&|h| h) {
        let tol = cfg.tolerances.hermitian_ratio;
        for r in &herm {
            // worst_mirrored is the reciprocal of the smallest ratio
            let ok = (r.worst_ratio - 1.0).abs() <= tol && (r.worst_mirrored - 1.0).abs() <= tol;
            out.checks.push(Check::new(
                format!("alpha {}: Hermitian ratios equal 1", r.alpha),
                ok,
                format!(
                    "max {} min {}",
                    fmt(r.worst_ratio),
                    fmt(1.0 / r.worst_mirrored)
                ),
            ));
        }
    }
    out.files.push(("kato.csv".into(), kato_csv(&all)));
    Ok(out)
}

fn lattice(specs: &[TimeGridSpec]) -> Result<Vec<Arc<TimeGrid>>, CliError> {
    specs.iter().map(build_grid).collect()
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ops = operators(cfg)?;
    let grids = lattice(&cfg.sweep.lattice)?;
    let limit = cfg.tolerances.stabilization_ratio;
    let mut out = Outcome::default();
    let mut tables = Vec::new();
    for (i, a) in ops.iter().enumerate() {
        let report = beta_sweep(a, &cfg.betas, &grids, cfg.sweep.target)?;
        for &b in &cfg.betas {
            let ratio = report.final_ratio(b).unwrap_or(f64::NAN);
            let verdict = report.verdict(b).unwrap_or(Verdict::Inconclusive);
            out.checks.push(Check::new(
                format!("operator {i}, beta {b}: norms stabilize"),
                verdict == Verdict::Bounded && ratio <= limit,
                format!("final refinement ratio {}, verdict {verdict}", fmt(ratio)),
            ));
        }
        tables.push(report.to_csv());
    }
    out.files.push(("sweep.csv".into(), stack_tables(&tables)));
    Ok(out)
}

pub fn counterexample(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ops = operators(cfg)?;
    let sec = &cfg.counterexample;
    let u = sec.u.to_cvec()?;
    let t_mins = decade_t_mins(sec.decades);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for (i, a) in ops.iter().enumerate() {
        for &beta in &cfg.betas {
            let r = counterexample_growth(a, &u, beta, &t_mins)?;
            let expected = if beta >= 1.0 {
                Verdict::Growing
            } else {
                Verdict::Bounded
            };
            out.checks.push(Check::new(
                format!("operator {i}, beta {beta}: verdict"),
                r.verdict == expected,
                format!("{} (expected {expected})", r.verdict),
            ));
            let target = r.claim_norm.powi(2) * std::f64::consts::LN_10;
            if beta == 1.0 {
                let worst = r
                    .rows
                    .iter()
                    .filter(|g| g.t_min <= sec.compare_below * (1.0 + 1e-12))
                    .map(|g| (g.delta_per_decade / target - 1.0).abs())
                    .fold(0.0, f64::max);
                out.checks.push(Check::new(
                    format!("operator {i}, beta 1: increments per decade"),
                    worst <= cfg.tolerances.growth_match,
                    format!(
                        "target {}, worst relative deviation {}",
                        fmt(target),
                        fmt(worst)
                    ),
                ));
            }
            for g in &r.rows {
                rows.push(vec![
                    i.to_string(),
                    fmt(beta),
                    fmt(g.t_min),
                    fmt(g.norm_sq),
                    fmt(g.delta_per_decade),
                    fmt(target),
                    r.verdict.to_string(),
                ]);
            }
        }
    }
    out.files.push((
        "counterexample.csv".into(),
        csv_table(
            &[
                "operator",
                "beta",
                "t_min",
                "norm_sq",
                "delta_per_decade",
                "claimed_delta",
                "verdict",
            ],
            &rows,
        ),
    ));
    Ok(out)
}

pub fn cotlar(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ops = operators(cfg)?;
    let sec = &cfg.cotlar;
    let tol = &cfg.tolerances;
    let rgrid = build_grid(&sec.reconstruction_grid)?;
    let mut out = Outcome::default();
    let mut tables = Vec::new();
    let mut recon = Vec::new();
    for (i, a) in ops.iter().enumerate() {
        let u_grid = dyadic_u_grid(a, sec.half_width)?;
        // u_grid is centred on 1 / spectral radius
        let scale = u_grid[sec.half_width.max(0) as usize];
        let grid = build_grid(&TimeGridSpec {
            t_min: sec.grid.t_min * scale,
            t_max: sec.grid.t_max * scale,
            ..sec.grid.clone()
        })?;
        let pairs = pair_norms(a, &u_grid, &grid)?;
        let sym = pairs
            .iter()
            .filter(|p| p.u == p.v)
            .map(|p| (p.norm_tu_tv_star - p.norm_tu_star_tv).abs() / p.norm_tu_tv_star.max(1e-300))
            .fold(0.0, f64::max);
        out.checks.push(Check::new(
            format!("operator {i}: u = v symmetry"),
            sym <= 1e-8,
            format!("max relative gap {}", fmt(sym)),
        ));
        for &alpha in &cfg.alphas {
            let r = orthogonality_report(alpha, &pairs)?;
            out.checks.push(Check::new(
                format!("operator {i}, alpha {alpha}: decay"),
                r.fitted_decay >= alpha - tol.decay_slack,
                format!(
                    "fitted decay {}, constant {}, Cotlar bound {}",
                    fmt(r.fitted_decay),
                    fmt(r.constant),
                    fmt(r.cotlar_bound)
                ),
            ));
            tables.push(r.to_csv());
        }
        let limit = if a.dim() == 1 {
            tol.reconstruction_scalar
        } else {
            tol.reconstruction_matrix
        };
        if range_kernel_split(a) {
            let quad = calderon_window(a, sec.reconstruction_per_decade)?;
            let e = reconstruction_error(a, &rgrid, &quad)?;
            let pass = e.relative <= limit;
            out.checks.push(Check::new(
                format!("operator {i}: reconstruction"),
                pass,
                format!("relative error {} (limit {})", fmt(e.relative), fmt(limit)),
            ));
            recon.push(vec![
                i.to_string(),
                a.dim().to_string(),
                fmt(e.relative),
                fmt(e.calderon_defect),
                pass.to_string(),
            ]);
        }
    }
    let per_alpha: Vec<String> = tables;
    let mut cotlar_csv = String::new();
    let k = cfg.alphas.len();
    for (j, t) in per_alpha.iter().enumerate() {
        cotlar_csv.push_str(&with_operator_column(j / k, t, j == 0));
    }
    out.files.push(("cotlar.csv".into(), cotlar_csv));
    out.files.push((
        "reconstruction.csv".into(),
        csv_table(
            &[
                "operator",
                "dim",
                "relative_error",
                "calderon_defect",
                "pass",
            ],
            &recon,
        ),
    ));
    Ok(out)
}

#[derive(Serialize)]
struct CauchyOperatorReport {
    operator: usize,
    ivp: maxreg_core::cauchy::IvpReport,
    trace_recovery: TraceRoundTrip,
    continuity: maxreg_core::cauchy::ContinuityReport,
    identity: maxreg_core::cauchy::IdentityReport,
}

#[derive(Serialize)]
struct TraceRoundTrip {
    h: VecJson,
    recovered: VecJson,
    relative_error: f64,
    representation_error: f64,
}

pub fn cauchy(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ops = operators(cfg)?;
    let sec = &cfg.cauchy;
    let tol = &cfg.tolerances;
    let grid = build_grid(&cfg.grid)?;
    let u0 = sec.u0.to_cvec()?;
    let h = sec.h.to_cvec()?;
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    for (i, a) in ops.iter().enumerate() {
        let f = sec.f.build(&grid, a.dim())?;
        let sol = solve_ivp(a, &u0, &f)?;
        out.checks.push(Check::new(
            format!("operator {i}: weak residual"),
            sol.report.max_residual <= tol.weak_residual,
            format!("max residual {}", fmt(sol.report.max_residual)),
        ));
        out.checks.push(Check::new(
            format!("operator {i}: initial trace"),
            sol.report.trace_error <= tol.trace_error.max(1e-300) * u0.norm().max(1.0),
            format!("|limit - u0| = {}", fmt(sol.report.trace_error)),
        ));

        if h.len() != a.dim() {
            return Err(CliError::Config(format!(
                "trace h has length {}, operator dimension is {}",
                h.len(),
                a.dim()
            )));
        }
        let u = homogeneous(a, &h, &grid).axpy(C64::from(1.0), &duhamel_v(a, &f)?);
        let rec = recover_trace(a, &u, &f)?;
        let err = (&rec.h - &h).norm() / h.norm().max(f64::MIN_POSITIVE);
        out.checks.push(Check::new(
            format!("operator {i}: trace round trip"),
            err <= tol.trace_round_trip,
            format!("relative error {}", fmt(err)),
        ));

        let cont = continuity_bound_check(a, &f, sec.beta)?;
        out.checks.push(Check::new(
            format!("operator {i}: continuity bound"),
            cont.within_bound(),
            format!(
                "ratio {} vs M^2/(1-beta) = {}",
                fmt(cont.ratio),
                fmt(cont.bound)
            ),
        ));
        let id = maxreg_identity_check(a, &f, sec.beta)?;
        out.checks.push(Check::new(
            format!("operator {i}: Av = M+ f"),
            id.av_matches_mplus <= tol.identity,
            format!("relative gap {}", fmt(id.av_matches_mplus)),
        ));

        out.files
            .push((format!("solution_{i}.csv"), sol.u.to_csv()));
        reports.push(CauchyOperatorReport {
            operator: i,
            ivp: sol.report,
            trace_recovery: TraceRoundTrip {
                h: (&h).into(),
                recovered: (&rec.h).into(),
                relative_error: err,
                representation_error: rec.representation_error,
            },
            continuity: cont,
            identity: id,
        });
    }
    out.files.push(("cauchy.json".into(), to_json(&reports)));
    Ok(out)
}
