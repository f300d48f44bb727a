use super::{ExactError, ExactQTable};
use crate::certificate::{BoundCertificate, EvidenceRow};
use crate::local_times::{IndicatorSet, ObservableF, TailRule};

/// Most terms a limit-constant series may sum before giving up on `tol`.
const MAX_SERIES_TERMS: usize = 50_000_000;

/// A growth-envelope ratio may rise by at most this factor from the lower
/// half of an `n`-grid to the upper half before the envelope is rejected.
pub const GRID_GROWTH_SLACK: f64 = 1.5;

/// `λ* = log(1/(1-γ))`.
pub fn lambda_star(gamma: f64) -> Result<f64, ExactError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(ExactError::GammaOutOfRange(gamma));
    }
    Ok(-(-gamma).ln_1p())
}

/// `log_(m)(x)`: the m-fold iterated natural logarithm, `log_(0)(x) = x`.
/// `None` once an argument is non-positive.
pub fn iterated_log(x: f64, m: u32) -> Option<f64> {
    let mut v = x;
    for _ in 0..m {
        if v <= 0.0 {
            return None;
        }
        v = v.ln();
    }
    Some(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitConstant {
    /// `γ² Σ_j f(j) (1-γ)^{j-1}`.
    pub value: f64,
    /// Bound on the neglected remainder (zero for closed forms).
    pub remainder: f64,
    pub terms: usize,
}

impl LimitConstant {
    fn closed(value: f64) -> Self {
        LimitConstant { value, remainder: 0.0, terms: 0 }
    }
}

/// Sums `t(j)` for `j >= 1` until the remainder envelope drops below `tol`.
/// `ratio_sup(j)` bounds `|t(i+1)/t(i)|` for every `i >= j`.
fn geometric_tail_sum(
    t: impl Fn(u64) -> f64,
    ratio_sup: impl Fn(u64) -> f64,
    tol: f64,
) -> Result<LimitConstant, ExactError> {
    let mut sum = 0.0;
    for j in 1..=MAX_SERIES_TERMS as u64 {
        let term = t(j);
        sum += term;
        let rho = ratio_sup(j);
        if rho < 1.0 {
            let rem = term.abs() * rho / (1.0 - rho);
            if rem < tol {
                return Ok(LimitConstant { value: sum, remainder: rem, terms: j as usize });
            }
        }
    }
    Err(ExactError::ToleranceUnreachable(tol))
}

/// The almost-sure limit of `G_n(f)/n`.
///
/// `γ = 1` (no returns) gives `f(1)`: every visited site is visited once.
pub fn limit_constant(f: &ObservableF, gamma: f64, tol: f64) -> Result<LimitConstant, ExactError> {
    if gamma == 1.0 {
        return Ok(LimitConstant::closed(f.eval(1)));
    }
    let lambda = lambda_star(gamma)?;
    let x = 1.0 - gamma;
    let g2 = gamma * gamma;
    match f {
        ObservableF::Power { alpha } if *alpha == 0.0 => Ok(LimitConstant::closed(gamma)),
        ObservableF::Power { alpha } if *alpha == 1.0 => Ok(LimitConstant::closed(1.0)),
        ObservableF::Power { alpha } if *alpha == 2.0 => Ok(LimitConstant::closed((2.0 - gamma) / gamma)),
        ObservableF::Power { alpha } => {
            let a = *alpha;
            let lc = geometric_tail_sum(
                |j| (j as f64).powf(a) * x.powi(j as i32 - 1),
                |j| (1.0 + 1.0 / j as f64).powf(a) * x,
                tol / g2,
            )?;
            Ok(LimitConstant { value: g2 * lc.value, remainder: g2 * lc.remainder, terms: lc.terms })
        }
        ObservableF::Indicator(IndicatorSet::Finite(js)) => {
            Ok(LimitConstant::closed(js.iter().filter(|&&j| j >= 1).map(|&j| g2 * x.powi(j as i32 - 1)).sum()))
        }
        ObservableF::Indicator(IndicatorSet::CoFinite(excluded)) => Ok(LimitConstant::closed(
            gamma - excluded.iter().filter(|&&j| j >= 1).map(|&j| g2 * x.powi(j as i32 - 1)).sum::<f64>(),
        )),
        ObservableF::Table { values, tail } => {
            let head: f64 = values.iter().enumerate().map(|(i, v)| v * x.powi(i as i32)).sum();
            let m = values.len() as i32;
            match tail {
                TailRule::Zero => Ok(LimitConstant::closed(g2 * head)),
                TailRule::Last => {
                    let last = values.last().copied().unwrap_or(0.0);
                    Ok(LimitConstant::closed(g2 * head + gamma * last * x.powi(m)))
                }
                TailRule::PowerExtrapolation => {
                    let lc = geometric_tail_sum(
                        |j| f.eval(j) * x.powi(j as i32 - 1),
                        |j| {
                            let (a, b) = (f.eval(j.max(values.len() as u64 + 1)), f.eval(j.max(values.len() as u64 + 1) + 1));
                            if j as usize > values.len() && a != 0.0 {
                                // power-law ratio decreases towards 1
                                (b / a).abs().max(1.0) * x
                            } else {
                                f64::INFINITY
                            }
                        },
                        tol / g2,
                    )?;
                    Ok(LimitConstant { value: g2 * lc.value, remainder: g2 * lc.remainder, terms: lc.terms })
                }
            }
        }
        ObservableF::ExpCapped { c, p } => {
            let gap = lambda - c;
            let at_edge = gap.abs() <= 1e-9 * lambda.max(1.0);
            if gap < 0.0 && !at_edge || at_edge && *p <= 1.0 {
                return Err(ExactError::SeriesDivergent(format!(
                    "f = {f} grows at least like e^(jλ*) without summable damping (λ* = {lambda})"
                )));
            }
            // t(j) = f(j) x^{j-1} = e^{λ*} e^{-(λ*-c) j} j^{-p}
            let term = |j: u64| (c * j as f64 - p * (j as f64).ln() - lambda * (j as f64 - 1.0)).exp();
            if at_edge {
                let mut sum = 0.0;
                let scale = lambda.exp();
                for j in 1..=MAX_SERIES_TERMS as u64 {
                    sum += term(j);
                    let rem = scale * (j as f64).powf(1.0 - p) / (p - 1.0);
                    if g2 * rem < tol {
                        return Ok(LimitConstant { value: g2 * sum, remainder: g2 * rem, terms: j as usize });
                    }
                }
                return Err(ExactError::ToleranceUnreachable(tol));
            }
            let lc = geometric_tail_sum(
                term,
                |j| (c - lambda).exp() * (1.0 + 1.0 / j as f64).powf((-p).max(0.0)),
                tol / g2,
            )?;
            Ok(LimitConstant { value: g2 * lc.value, remainder: g2 * lc.remainder, terms: lc.terms })
        }
    }
}

/// Breakdown of the second-moment bound for `Var G_n(f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceBound {
    pub bound: f64,
    /// `E G_n(f²)` (summed over the split parts when split).
    pub expected_square: f64,
    /// `4 Σ_i f(i) Δf(i) (1-γ)^{i-1} · Σ_r r(n-r) u_r`.
    pub cross_term: f64,
    pub split: bool,
}

fn monotone_bound(table: &ExactQTable, u: &[f64], values: &[f64], n: usize, gamma: f64) -> Result<(f64, f64), ExactError> {
    let x = 1.0 - gamma;
    let expected_square = table.expected_with(n, |j| values.get(j as usize).map_or(0.0, |v| v * v))?;
    let coupling: f64 = (1..=n).map(|i| {
        let delta = values[i] - values[i - 1];
        values[i] * delta * x.powi(i as i32 - 1)
    }).sum();
    let returns: f64 = (1..=n).map(|r| (r * (n - r)) as f64 * u[r]).sum();
    Ok((expected_square, 4.0 * coupling * returns))
}

/// Upper bound on `Var G_n(f)` for non-decreasing `f` with `f(0) = 0`:
/// `E G_n(f²) + 4 Σ_i f(i) Δf(i) (1-γ)^{i-1} Σ_r r(n-r) u_r`.
///
/// With `split`, a general `f` is written as `f₁ - f₂` with both parts
/// non-decreasing and the bound is `2 B(f₁) + 2 B(f₂)`.
/// `table` must hold the row for `n`; `u` must reach `n`.
pub fn variance_bound(
    table: &ExactQTable,
    u: &[f64],
    f: &ObservableF,
    n: usize,
    gamma: f64,
    split: bool,
) -> Result<VarianceBound, ExactError> {
    if u.len() <= n {
        return Err(ExactError::HorizonExceeded { requested: n, horizon: u.len().saturating_sub(1) });
    }
    let values: Vec<f64> = (0..=n as u64 + 1).map(|j| f.eval(j)).collect();
    let decreasing_at = (1..values.len()).find(|&i| values[i] < values[i - 1]);
    match decreasing_at {
        None => {
            let (expected_square, cross_term) = monotone_bound(table, u, &values, n, gamma)?;
            Ok(VarianceBound { bound: expected_square + cross_term, expected_square, cross_term, split: false })
        }
        Some(at) if !split => Err(ExactError::NotMonotone { at: at as u64 }),
        Some(_) => {
            let mut up = vec![0.0; values.len()];
            let mut down = vec![0.0; values.len()];
            for i in 1..values.len() {
                let d = values[i] - values[i - 1];
                up[i] = up[i - 1] + d.max(0.0);
                down[i] = down[i - 1] + (-d).max(0.0);
            }
            let (e1, c1) = monotone_bound(table, u, &up, n, gamma)?;
            let (e2, c2) = monotone_bound(table, u, &down, n, gamma)?;
            Ok(VarianceBound {
                bound: 2.0 * (e1 + c1) + 2.0 * (e2 + c2),
                expected_square: e1 + e2,
                cross_term: c1 + c2,
                split: true,
            })
        }
    }
}

/// Envelope tested against `S(n) = Σ_{k<=n} k u_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConditionMode {
    /// `S(n) <= C n^{1-η}`.
    Eta(f64),
    /// `S(n) <= C log n`.
    Log,
}

impl ConditionMode {
    fn envelope(self, n: f64) -> f64 {
        match self {
            ConditionMode::Eta(eta) => n.powf(1.0 - eta),
            ConditionMode::Log => n.ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionMode::Eta(_) => "condition-eta",
            ConditionMode::Log => "condition-log",
        }
    }
}

/// Checks a growth envelope for `S(n) = Σ_{k<=n} k u_k` on a grid of `n >= 2`.
///
/// The fitted constant is `C = max_grid S(n)/env(n)`. Any finite grid admits
/// some `C`, so the verdict asks whether the ratio `S(n)/env(n)` levels off:
/// on the upper half of the grid it may not exceed `GRID_GROWTH_SLACK` times
/// its value at the first upper-half point. Lower-half rows are reported
/// against `C · env(n)`.
pub fn condition_check(u: &[f64], mode: ConditionMode, grid: &[usize]) -> Result<BoundCertificate, ExactError> {
    let mut grid: Vec<usize> = grid.iter().copied().filter(|&n| n >= 2).collect();
    grid.sort_unstable();
    grid.dedup();
    let top = grid.last().copied().unwrap_or(0);
    if top >= u.len() {
        return Err(ExactError::HorizonExceeded { requested: top, horizon: u.len().saturating_sub(1) });
    }
    if let ConditionMode::Eta(eta) = mode {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(ExactError::ParameterOutOfRange(format!("eta must lie in (0,1), got {eta}")));
        }
    }
    let mut partial = vec![0.0; top + 1];
    for k in 1..=top {
        partial[k] = partial[k - 1] + k as f64 * u[k];
    }
    let ratios: Vec<f64> = grid.iter().map(|&n| partial[n] / mode.envelope(n as f64)).collect();
    let split = grid.len() / 2;
    let c_fit = ratios.iter().copied().fold(0.0, f64::max);
    let c_ref = ratios.get(split).copied().unwrap_or(0.0);
    let allowed = GRID_GROWTH_SLACK * c_ref;
    let evidence: Vec<EvidenceRow> = grid
        .iter()
        .zip(&ratios)
        .enumerate()
        .map(|(i, (&n, &r))| {
            let c = if i < split { c_fit } else { allowed };
            EvidenceRow {
                n: n as u64,
                label: "S(n)".into(),
                empirical: partial[n],
                bound: c * mode.envelope(n as f64),
                holds: r <= c * (1.0 + 1e-12),
            }
        })
        .collect();
    let mut parameters = vec![("C".to_string(), c_fit), ("C_upper_reference".to_string(), c_ref)];
    if let ConditionMode::Eta(eta) = mode {
        parameters.push(("eta".to_string(), eta));
    }
    Ok(BoundCertificate::from_rows(mode.name(), parameters, evidence))
}

/// `P{l(n) > t} <= min(1, n (1-γ)^{t-1})`.
pub fn maxlocal_tail_bound(n: u64, t: u64, gamma: f64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    let v = n as f64 * (1.0 - gamma).powf(t as f64 - 1.0);
    v.min(1.0)
}

/// Eventual almost-sure upper bound on the maximal local time:
/// `1 + (log n + log_(2) n + … + log_(m) n + (1+ε) log_(m+1) n) / λ*`.
pub fn maxlocal_proposition_bound(n: f64, eps: f64, m: u32, gamma: f64) -> Result<f64, ExactError> {
    let lambda = lambda_star(gamma)?;
    if !(eps > 0.0) {
        return Err(ExactError::ParameterOutOfRange(format!("epsilon must be positive, got {eps}")));
    }
    let mut sum = 0.0;
    for i in 1..=m {
        sum += iterated_log(n, i).ok_or(ExactError::IteratedLogUndefined { n, depth: i + 1 })?;
    }
    let last = iterated_log(n, m + 1).ok_or(ExactError::IteratedLogUndefined { n, depth: m + 1 })?;
    Ok(1.0 + (sum + (1.0 + eps) * last) / lambda)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TruncationCase {
    /// Polynomial return-sum envelope with exponent `η`: one cut.
    Polynomial { eta: f64 },
    /// Logarithmic return-sum envelope: two cuts.
    Logarithmic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: Option<f64>,
}

/// Cut points splitting `G_n(f)` into a bulk part, a boundary band and a remainder.
///
/// Logarithmic case: `log n / λ*` and `(log n + b_n)/λ*` with
/// `b_n = log_(2) n + 2 log_(3) n`; both iterated logs must be positive.
/// Polynomial case: `(η/2) log n / λ*`.
pub fn truncation_thresholds(n: f64, gamma: f64, case: TruncationCase) -> Result<Thresholds, ExactError> {
    let lambda = lambda_star(gamma)?;
    let log_n = iterated_log(n, 1).filter(|v| *v > 0.0).ok_or(ExactError::IteratedLogUndefined { n, depth: 1 })?;
    match case {
        TruncationCase::Polynomial { eta } => {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(ExactError::ParameterOutOfRange(format!("eta must lie in (0,1), got {eta}")));
            }
            Ok(Thresholds { lower: eta / 2.0 * log_n / lambda, upper: None })
        }
        TruncationCase::Logarithmic => {
            let l2 = iterated_log(n, 2).filter(|v| *v > 0.0).ok_or(ExactError::IteratedLogUndefined { n, depth: 2 })?;
            let l3 = iterated_log(n, 3).filter(|v| *v > 0.0).ok_or(ExactError::IteratedLogUndefined { n, depth: 3 })?;
            let b = l2 + 2.0 * l3;
            Ok(Thresholds { lower: log_n / lambda, upper: Some((log_n + b) / lambda) })
        }
    }
}
