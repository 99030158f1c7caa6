//! Convergence diagnostics and posterior predictive checks.

mod convergence;
mod ppc;

pub use convergence::{
    diagnose, ess_bulk, ess_tail, rhat, rhat_classic, split_rhat, ConvergenceReport, ParameterDiagnostics,
    RHAT_THRESHOLD,
};
pub use ppc::{
    default_statistics, posterior_predictive_check, predictive_p_value, GroupProportion, MaxTrialProportion,
    MinTrialProportion, PpcEntry, PpcReport, TestStatistic,
};
