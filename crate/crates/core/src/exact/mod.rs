//! Return probabilities, first-return law, escape probability, exact
//! expectations of `Q_n(j)` and the bound calculators built on them.

mod bounds;
mod eq;
mod series;

use thiserror::Error;

pub use bounds::{
    condition_check, iterated_log, lambda_star, limit_constant, maxlocal_proposition_bound, maxlocal_tail_bound,
    truncation_thresholds, variance_bound, ConditionMode, LimitConstant, Thresholds, TruncationCase, VarianceBound,
    GRID_GROWTH_SLACK,
};
pub use eq::{exact_eg, exact_eq, ExactQTable};
pub use series::{
    compute_u_series, compute_u_series_exact, dense_memory, dense_u_series, first_return_series,
    first_return_series_exact, gamma_summary, renewal_residual, ClosedForm, GammaSummary, ReturnSeries, TailTemplate,
    TransienceStatus, NEGATIVITY_CLAMP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("dense return-probability table needs {needed} bytes, above the cap of {cap}")]
    MemoryCapExceeded { needed: usize, cap: usize },
    #[error("dimension {0} is not supported by this routine")]
    DimensionUnsupported(usize),
    #[error("first-return probability f_{n} = {value} is negative beyond rounding")]
    NumericalNegativity { n: usize, value: f64 },
    #[error("inconsistent return series: {0}")]
    InconsistentSeries(String),
    #[error("time {requested} lies beyond the computed horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },
    #[error("escape probability must lie in (0,1), got {0}")]
    GammaOutOfRange(f64),
    #[error("series diverges: {0}")]
    SeriesDivergent(String),
    #[error("f decreases at j = {at}; use the split bound")]
    NotMonotone { at: u64 },
    #[error("iterated logarithm of depth {depth} is undefined or non-positive at n = {n}")]
    IteratedLogUndefined { n: f64, depth: u32 },
    #[error("exact rational arithmetic needs a one-dimensional distribution with rational weights")]
    ExactModeUnavailable,
    #[error("tolerance {0} not reached within the term budget")]
    ToleranceUnreachable(f64),
    #[error("{0}")]
    ParameterOutOfRange(String),
}
