use std::collections::BTreeMap;

use super::config::require_transient;
use super::{resolve_gamma, simulate, ExperimentConfig, ExperimentError};
use crate::certificate::{BoundCertificate, EvidenceRow};
use crate::exact::{lambda_star, maxlocal_proposition_bound, maxlocal_tail_bound, TransienceStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct MaxLocalSettings {
    pub eps: f64,
    pub m: u32,
    /// Thresholds `t`; defaults to `1..=max(⌈2 log n/λ*⌉, max l(n) + 1)`.
    pub t_grid: Option<Vec<u64>>,
    /// Largest tolerated fraction of replicas above the eventual bound at the
    /// final checkpoint.
    pub max_violation_fraction: f64,
    /// Binomial standard errors of slack on the tail comparison.
    pub se_slack: f64,
}

impl Default for MaxLocalSettings {
    fn default() -> Self {
        MaxLocalSettings { eps: 0.5, m: 1, t_grid: None, max_violation_fraction: 0.05, se_slack: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailRow {
    pub t: u64,
    /// Fraction of replicas with `l(n) > t`.
    pub frequency: f64,
    pub bound: f64,
    pub std_error: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxLocalCheckpoint {
    pub n: u64,
    /// `l(n)` value to number of replicas.
    pub distribution: BTreeMap<u32, u64>,
    pub tail: Vec<TailRow>,
    pub proposition_bound: Option<f64>,
    pub violation_fraction: Option<f64>,
    /// Mean, min and max of `l(n)/log n` over replicas (`n >= 2`).
    pub ratio_to_log: Option<(f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxLocalReport {
    pub gamma: f64,
    /// `1/λ*`, the reference slope for `l(n)/log n`; reported, not asserted.
    pub inverse_lambda: f64,
    pub checkpoints: Vec<MaxLocalCheckpoint>,
    pub certificate: BoundCertificate,
}

/// Maximal local time across replicas against the tail bound and the
/// eventual almost-sure bound.
pub fn run_maxlocal(cfg: &ExperimentConfig, settings: &MaxLocalSettings) -> Result<MaxLocalReport, ExperimentError> {
    let times = cfg.validate()?;
    let info = resolve_gamma(cfg)?;
    require_transient(&info, cfg.allow_degenerate)?;
    let trivial = info.status == TransienceStatus::TrivialTransient;
    let gamma = if trivial { 1.0 } else { info.value };
    let lambda = if trivial { f64::INFINITY } else { lambda_star(gamma)? };

    let mut run = cfg.clone();
    run.observables = Vec::new();
    run.alphas = Vec::new();
    let traces = simulate(&run, false)?;
    let r = cfg.replicas as f64;

    let mut checkpoints = Vec::with_capacity(times.len());
    let mut evidence = Vec::new();
    for (k, &n) in times.iter().enumerate() {
        let ls: Vec<u32> = traces.iter().map(|t| t.checkpoints[k].l_max).collect();
        let mut distribution = BTreeMap::new();
        for &l in &ls {
            *distribution.entry(l).or_insert(0u64) += 1;
        }
        let observed_max = ls.iter().copied().max().unwrap_or(0) as u64;
        let grid: Vec<u64> = match &settings.t_grid {
            Some(g) => g.clone(),
            None => {
                let scale = if lambda.is_finite() { (2.0 * (n as f64).ln() / lambda).ceil().max(1.0) as u64 } else { 1 };
                (1..=scale.max(observed_max + 1)).collect()
            }
        };
        let tail: Vec<TailRow> = grid
            .iter()
            .map(|&t| {
                let frequency = ls.iter().filter(|&&l| l as u64 > t).count() as f64 / r;
                let bound = maxlocal_tail_bound(n, t, gamma);
                let std_error = (frequency * (1.0 - frequency) / r).sqrt();
                TailRow { t, frequency, bound, std_error, holds: frequency <= bound + settings.se_slack * std_error }
            })
            .collect();
        for row in &tail {
            evidence.push(EvidenceRow {
                n,
                label: format!("P{{l(n)>{}}}", row.t),
                empirical: row.frequency,
                bound: row.bound + settings.se_slack * row.std_error,
                holds: row.holds,
            });
        }
        let proposition_bound = if trivial {
            Some(1.0)
        } else {
            maxlocal_proposition_bound(n as f64, settings.eps, settings.m, gamma).ok()
        };
        let violation_fraction = proposition_bound.map(|b| ls.iter().filter(|&&l| l as f64 > b).count() as f64 / r);
        if k + 1 == times.len() {
            if let Some(v) = violation_fraction {
                evidence.push(EvidenceRow {
                    n,
                    label: "violation fraction".into(),
                    empirical: v,
                    bound: settings.max_violation_fraction,
                    holds: v <= settings.max_violation_fraction,
                });
            }
        }
        let ratio_to_log = (n >= 2).then(|| {
            let ln = (n as f64).ln();
            let ratios: Vec<f64> = ls.iter().map(|&l| l as f64 / ln).collect();
            let mean = ratios.iter().sum::<f64>() / r;
            let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max)
        });
        checkpoints.push(MaxLocalCheckpoint { n, distribution, tail, proposition_bound, violation_fraction, ratio_to_log });
    }
    let params = vec![
        ("gamma".to_string(), gamma),
        ("epsilon".to_string(), settings.eps),
        ("m".to_string(), settings.m as f64),
        ("inverse_lambda".to_string(), 1.0 / lambda),
    ];
    Ok(MaxLocalReport {
        gamma,
        inverse_lambda: 1.0 / lambda,
        checkpoints,
        certificate: BoundCertificate::from_rows("maxlocal", params, evidence),
    })
}
