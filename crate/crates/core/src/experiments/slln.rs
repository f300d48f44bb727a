use super::config::require_transient;
use super::{resolve_gamma, simulate, ExperimentConfig, ExperimentError, Moments, ReplicaTrace};
use crate::exact::{limit_constant, ExactQTable, ReturnSeries, TransienceStatus};
use crate::local_times::ObservableF;

/// Replica mean within this many standard errors of the exact mean agrees;
/// between `FLAG_SE` and this it is flagged.
const CROSS_CHECK_SE: f64 = 4.0;
const FLAG_SE: f64 = 3.0;
const LIMIT_TOL: f64 = 1e-12;

/// A reported statistic: a registered `G_n(f)` or an `L_n(α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub label: String,
    pub f: ObservableF,
}

impl Channel {
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Vec<Channel>, ExperimentError> {
        let mut out: Vec<Channel> = cfg.observables.iter().map(|f| Channel { label: f.label(), f: f.clone() }).collect();
        for &a in &cfg.alphas {
            out.push(Channel { label: format!("L({a})"), f: ObservableF::power(a)? });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossCheck {
    NotApplicable,
    Agrees,
    /// Between 3 and 4 standard errors.
    Flagged,
    Disagrees,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    pub channel: String,
    /// Replica mean of `G_n(f)/n`.
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// `E G_n(f)/n` when `n` is within the exact horizon.
    pub exact_mean: Option<f64>,
    pub limit: Option<f64>,
    /// `(mean - reference)/SE`, reference the exact mean if known, else the limit.
    pub standardized: Option<f64>,
    /// `E[(G_n/n - limit)²]^{1/2}` over replicas.
    pub l2_distance: Option<f64>,
    pub cross_check: CrossCheck,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub gamma: f64,
    pub status: TransienceStatus,
    pub replicas: u64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn channel(&self, label: &str) -> impl Iterator<Item = &ConvergenceRow> {
        let label = label.to_string();
        self.rows.iter().filter(move |r| r.channel == label)
    }
}

/// `per_checkpoint[k][c]`: moments of channel `c` divided by `n` at checkpoint `k`,
/// folded in replica order.
pub fn aggregate(traces: &[ReplicaTrace]) -> Vec<Vec<Moments>> {
    let Some(first) = traces.first() else { return Vec::new() };
    let mut acc: Vec<Vec<Moments>> = first
        .checkpoints
        .iter()
        .map(|cp| vec![Moments::default(); cp.g.len() + cp.l.len()])
        .collect();
    for trace in traces {
        for (slot, cp) in acc.iter_mut().zip(&trace.checkpoints) {
            let n = cp.n.max(1) as f64;
            for (m, v) in slot.iter_mut().zip(cp.g.iter().chain(&cp.l)) {
                m.push(v / n);
            }
        }
    }
    acc
}

fn limit_for(f: &ObservableF, gamma: f64, status: TransienceStatus) -> Option<f64> {
    let g = if status == TransienceStatus::TrivialTransient { 1.0 } else { gamma };
    limit_constant(f, g, LIMIT_TOL).ok().map(|lc| lc.value)
}

/// Replicated estimate of `G_n(f)/n` at every checkpoint, compared with the
/// almost-sure limit and, within the exact horizon, with `E G_n(f)/n`.
pub fn run_slln(cfg: &ExperimentConfig) -> Result<ConvergenceReport, ExperimentError> {
    let times = cfg.validate()?;
    let info = resolve_gamma(cfg)?;
    require_transient(&info, cfg.allow_degenerate)?;
    let channels = Channel::for_config(cfg)?;

    let exact_times: Vec<usize> =
        times.iter().map(|&t| t as usize).filter(|&t| cfg.exact_horizon > 0 && t <= cfg.exact_horizon).collect();
    let table = match exact_times.last() {
        None => None,
        Some(&h) => {
            let series = match &info.series {
                Some(s) if s.horizon() >= h => s.clone(),
                _ => ReturnSeries::compute(&cfg.dist, h, cfg.mem_cap)?,
            };
            Some(ExactQTable::build(&series, &exact_times, None)?)
        }
    };

    let traces = simulate(cfg, false)?;
    let moments = aggregate(&traces);
    let limits: Vec<Option<f64>> = channels.iter().map(|c| limit_for(&c.f, info.value, info.status)).collect();

    let mut rows = Vec::with_capacity(times.len() * channels.len());
    for (k, &n) in times.iter().enumerate() {
        for (c, channel) in channels.iter().enumerate() {
            let m = &moments[k][c];
            let se = m.std_error();
            let exact_mean = match &table {
                Some(t) if (n as usize) <= cfg.exact_horizon => Some(t.expected_g(&channel.f, n as usize)? / n as f64),
                _ => None,
            };
            let limit = limits[c];
            let reference = exact_mean.or(limit);
            let standardized = reference.map(|r| {
                let d = m.mean - r;
                if se > 0.0 {
                    d / se
                } else if d.abs() <= 1e-12 * r.abs().max(1.0) {
                    0.0
                } else {
                    d.signum() * f64::INFINITY
                }
            });
            let cross_check = match (exact_mean, standardized) {
                (Some(_), Some(z)) if z.abs() <= FLAG_SE => CrossCheck::Agrees,
                (Some(_), Some(z)) if z.abs() <= CROSS_CHECK_SE => CrossCheck::Flagged,
                (Some(_), Some(_)) => CrossCheck::Disagrees,
                _ => CrossCheck::NotApplicable,
            };
            rows.push(ConvergenceRow {
                n,
                channel: channel.label.clone(),
                mean: m.mean,
                variance: m.variance(),
                std_error: se,
                exact_mean,
                limit,
                standardized,
                l2_distance: limit.map(|l| (m.population_variance() + (m.mean - l).powi(2)).sqrt()),
                cross_check,
            });
        }
    }
    Ok(ConvergenceReport { gamma: info.value, status: info.status, replicas: cfg.replicas, rows })
}
