//! The maximal regularity operators `M+` and `M-`: discretization, weighted
//! norms, the beta sweep, the `beta >= 1` counterexample, the extension of
//! `M-` to `L^2(dt/t)` and the Cesaro trace criterion.

mod assemble;
mod extension;
mod sweep;

pub use assemble::{
    assemble_duhamel, assemble_mminus, assemble_mplus, assemble_volterra, weighted_opnorm,
    weighted_opnorm_with, AssembledOperator, Direction, KernelKind, OperatorKind, PanelTable,
    PointEvaluator, OPNORM_RTOL,
};
pub use extension::{
    adjoint_quadratic_estimate, assemble_mminus_tilde, cesaro_average,
    decomposition_identity_check, extension_discrepancy, extension_terms, mminus_extension,
    mminus_rank_term, remark_beta1_check, remark_beta1_operator, trace_criterion, trace_vector,
    zero_limit_input, ExtensionTerms, TraceReport, ZERO_LIMIT_RTOL,
};
pub use sweep::{
    beta_sweep, counterexample_growth, decade_t_mins, growth_csv, growth_verdict,
    CounterexampleReport, GrowthRow, SweepReport, SweepRow, SweepTarget, Verdict,
    COUNTEREXAMPLE_PER_DECADE, COUNTEREXAMPLE_T_MAX, GROWTH_PER_DECADE, STABILIZATION_RATIO,
};
