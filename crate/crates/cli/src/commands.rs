use std::sync::Arc;

use loctime::certificate::{BoundCertificate, EvidenceRow};
use loctime::exact::{
    compute_u_series, condition_check, gamma_summary, limit_constant, ConditionMode, ExactQTable, ReturnSeries,
    TailTemplate, TransienceStatus,
};
use loctime::experiments::{
    build_subsequence, estimate_gamma_mc, resolve_gamma, run_maxlocal, run_slln, simulate, verify_variance,
    verify_variance_exhaustive, CrossCheck, MaxLocalSettings, VSource,
};
use loctime::local_times::ObservableF;

use crate::config::{default_condition_grid, LoadedConfig};
use crate::output::{num, opt, OutDir};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Slln,
    Variance,
    Maxlocal,
    Conditions,
    Subsequence,
}

/// Result of a command: `all_hold` is false when a verification failed.
#[derive(Debug)]
pub struct Outcome {
    pub all_hold: bool,
    pub summary: Vec<String>,
}

impl Outcome {
    fn ok(summary: Vec<String>) -> Self {
        Outcome { all_hold: true, summary }
    }
}

pub fn cmd_simulate(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Outcome, CliError> {
    let exp = &cfg.experiment;
    let traces = simulate(exp, false)?;
    let mut header: Vec<String> = ["replica", "n", "range", "l_max"].iter().map(|s| s.to_string()).collect();
    header.extend(exp.observables.iter().map(|f| format!("G[{f}]/n")));
    header.extend(exp.alphas.iter().map(|a| format!("L[{a}]/n")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = traces.iter().flat_map(|t| {
        t.checkpoints.iter().map(move |cp| {
            let n = cp.n as f64;
            let mut row = vec![t.replica.to_string(), cp.n.to_string(), cp.range.to_string(), cp.l_max.to_string()];
            row.extend(cp.g.iter().chain(&cp.l).map(|v| num(v / n)));
            row
        })
    });
    let path = out.table("checkpoints.csv", &header, rows)?;
    let count = traces.iter().map(|t| t.checkpoints.len()).sum::<usize>();
    Ok(Outcome::ok(vec![format!("{count} checkpoint rows -> {}", path.display())]))
}

pub fn cmd_exact(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Outcome, CliError> {
    let exp = &cfg.experiment;
    let horizon = cfg.raw.exact.horizon.unwrap_or(cfg.raw.gamma.horizon);
    let series = ReturnSeries::compute(&exp.dist, horizon, exp.mem_cap)?;
    let template = TailTemplate::for_distribution(&exp.dist);

    // prefix estimates at powers of two and at the horizon
    let prefix_estimate = |n: usize| -> Option<f64> {
        (n >= 2 && (n.is_power_of_two() || n == horizon))
            .then(|| gamma_summary(&series.f_tau[..=n], &series.u[..=n], template).gamma_estimate)
    };
    out.table(
        "return_series.csv",
        &["n", "u", "f_tau", "gamma_n", "gamma_estimate"],
        (0..=horizon).map(|n| {
            vec![
                n.to_string(),
                num(series.u[n]),
                num(series.f_tau[n]),
                num(series.gamma.gamma_n[n]),
                opt(prefix_estimate(n)),
            ]
        }),
    )?;
    let g = &series.gamma;
    out.table(
        "gamma.csv",
        &["method", "horizon", "estimate", "upper", "error_bound", "status"],
        [vec![
            "series".to_string(),
            horizon.to_string(),
            num(g.gamma_estimate),
            num(g.gamma_upper),
            num(g.error_bound),
            status_name(g.status).to_string(),
        ]],
    )?;

    let times: Vec<usize> = match &cfg.raw.exact.times {
        Some(t) => t.clone(),
        None => exp
            .schedule
            .times(exp.n_max)
            .map_err(|e| CliError::Config(e.to_string()))?
            .into_iter()
            .map(|t| t as usize)
            .filter(|&t| t <= horizon)
            .collect(),
    };
    let j_cap = cfg.raw.exact.j_cap.or((g.status == TransienceStatus::Recurrent).then_some(64));
    let table = ExactQTable::build(&series, &times, j_cap)?;
    let mut eq_rows = Vec::new();
    for n in table.times() {
        for (j, v) in table.row(n).unwrap_or(&[]).iter().enumerate() {
            eq_rows.push(vec![n.to_string(), (j + 1).to_string(), num(*v)]);
        }
    }
    out.table("eq_table.csv", &["n", "j", "EQ"], eq_rows)?;

    let gamma = resolve_gamma(exp)?;
    let gamma_value = if gamma.status == TransienceStatus::TrivialTransient { 1.0 } else { gamma.value };
    let mut channels: Vec<ObservableF> = exp.observables.clone();
    for &a in &exp.alphas {
        channels.push(ObservableF::power(a)?);
    }
    let tol = cfg.raw.exact.limit_tol;
    let limit_rows = channels.iter().map(|f| match limit_constant(f, gamma_value, tol) {
        Ok(lc) => vec![f.label(), num(lc.value), num(lc.remainder), num(tol), String::new()],
        Err(e) => vec![f.label(), String::new(), String::new(), num(tol), e.to_string()],
    });
    out.table("limits.csv", &["observable", "limit", "remainder", "tolerance", "note"], limit_rows.collect::<Vec<_>>())?;
    Ok(Outcome::ok(vec![format!(
        "gamma estimate {} (upper {}, status {}) from horizon {horizon}",
        g.gamma_estimate,
        g.gamma_upper,
        status_name(g.status)
    )]))
}

pub fn cmd_gamma(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Outcome, CliError> {
    let exp = &cfg.experiment;
    let spec = &cfg.raw.gamma;
    let series = ReturnSeries::compute(&exp.dist, spec.horizon, exp.mem_cap)?;
    let g = &series.gamma;
    let mut rows = vec![vec![
        "series".to_string(),
        spec.horizon.to_string(),
        num(g.gamma_estimate),
        num((g.gamma_estimate - g.error_bound).max(0.0)),
        num(g.gamma_upper),
        status_name(g.status).to_string(),
    ]];
    let mut summary = vec![format!("series estimate {} +- {}", g.gamma_estimate, g.error_bound)];
    if spec.mc_replicas > 0 {
        let h = spec.mc_horizon.unwrap_or(exp.n_max);
        let mc = estimate_gamma_mc(&exp.dist, h, spec.mc_replicas, exp.seed, exp.threads)?;
        rows.push(vec![
            "monte_carlo".to_string(),
            h.to_string(),
            num(mc.estimate),
            num(mc.ci.0),
            num(mc.ci.1),
            format!("{}/{} escaped", mc.escapes, mc.replicas),
        ]);
        summary.push(format!("monte carlo gamma_{h} {} in [{}, {}]", mc.estimate, mc.ci.0, mc.ci.1));
    }
    out.table("gamma.csv", &["method", "horizon", "estimate", "lower", "upper", "detail"], rows)?;
    Ok(Outcome::ok(summary))
}

fn status_name(s: TransienceStatus) -> &'static str {
    match s {
        TransienceStatus::Transient => "transient",
        TransienceStatus::Recurrent => "recurrent",
        TransienceStatus::TrivialTransient => "never_returns",
    }
}

fn write_certificates(out: &mut OutDir, certs: &[BoundCertificate]) -> Result<(), CliError> {
    let rows = certs.iter().flat_map(|c| {
        c.evidence.iter().map(move |r| {
            vec![
                c.name.clone(),
                c.verdict.to_string(),
                r.n.to_string(),
                r.label.clone(),
                num(r.empirical),
                num(r.bound),
                r.holds.to_string(),
            ]
        })
    });
    out.table("certificates.csv", &["certificate", "verdict", "n", "check", "empirical", "bound", "holds"], rows)?;
    let params = certs
        .iter()
        .flat_map(|c| c.parameters.iter().map(move |(k, v)| vec![c.name.clone(), k.clone(), num(*v)]));
    out.table("certificate_parameters.csv", &["certificate", "parameter", "value"], params)?;
    Ok(())
}

pub fn cmd_verify(cfg: &LoadedConfig, suite: Suite, out: &mut OutDir) -> Result<Outcome, CliError> {
    let certs = match suite {
        Suite::Slln => verify_slln(cfg, out)?,
        Suite::Variance => verify_variance_suite(cfg, out)?,
        Suite::Maxlocal => verify_maxlocal(cfg, out)?,
        Suite::Conditions => verify_conditions(cfg)?,
        Suite::Subsequence => verify_subsequence(cfg, out)?,
    };
    write_certificates(out, &certs)?;
    let summary = certs.iter().map(|c| format!("{}: {}", c.name, c.verdict)).collect();
    Ok(Outcome { all_hold: certs.iter().all(BoundCertificate::holds), summary })
}

fn verify_slln(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Vec<BoundCertificate>, CliError> {
    let report = run_slln(&cfg.experiment)?;
    let cross = |c: CrossCheck| match c {
        CrossCheck::NotApplicable => "",
        CrossCheck::Agrees => "agrees",
        CrossCheck::Flagged => "flagged",
        CrossCheck::Disagrees => "disagrees",
    };
    out.table(
        "convergence.csv",
        &["n", "channel", "mean", "variance", "std_error", "exact_mean", "limit", "standardized", "l2_distance", "cross_check"],
        report.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.channel.clone(),
                num(r.mean),
                num(r.variance),
                num(r.std_error),
                opt(r.exact_mean),
                opt(r.limit),
                opt(r.standardized),
                opt(r.l2_distance),
                cross(r.cross_check).to_string(),
            ]
        }),
    )?;
    let tol = cfg.raw.verify.slln.tolerance;
    let last = cfg.experiment.n_max;
    let mut evidence = Vec::new();
    for r in &report.rows {
        if r.cross_check != CrossCheck::NotApplicable {
            evidence.push(EvidenceRow {
                n: r.n,
                label: format!("{} exact cross-check |z|", r.channel),
                empirical: r.standardized.unwrap_or(0.0).abs(),
                bound: 4.0,
                holds: r.cross_check != CrossCheck::Disagrees,
            });
        }
        if r.n == last {
            if let Some(l) = r.limit {
                let allowed = tol * l.abs().max(f64::MIN_POSITIVE);
                evidence.push(EvidenceRow {
                    n: r.n,
                    label: format!("{} |mean - limit|", r.channel),
                    empirical: (r.mean - l).abs(),
                    bound: allowed,
                    holds: (r.mean - l).abs() <= allowed,
                });
            }
        }
    }
    let params = vec![("gamma".to_string(), report.gamma), ("tolerance".to_string(), tol)];
    Ok(vec![BoundCertificate::from_rows("slln", params, evidence)])
}

fn verify_variance_suite(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Vec<BoundCertificate>, CliError> {
    let spec = &cfg.raw.verify.variance;
    let fs = if cfg.experiment.observables.is_empty() {
        vec![ObservableF::at_least(1)]
    } else {
        cfg.experiment.observables.clone()
    };
    let mut rows = Vec::new();
    let mut certs = Vec::new();
    for f in &fs {
        let check = if spec.exhaustive {
            verify_variance_exhaustive(&cfg.experiment, f, spec.split)?
        } else {
            verify_variance(&cfg.experiment, f, spec.split)?
        };
        for r in &check.rows {
            rows.push(vec![
                f.label(),
                r.n.to_string(),
                num(r.variance),
                num(r.ci_low),
                num(r.ci_high),
                num(r.bound.bound),
                num(r.bound.expected_square),
                num(r.bound.cross_term),
                num(r.scaled_variance),
            ]);
        }
        certs.push(check.certificate);
    }
    out.table(
        "variance.csv",
        &["observable", "n", "variance", "ci_low", "ci_high", "bound", "expected_square", "cross_term", "variance_of_mean"],
        rows,
    )?;
    Ok(certs)
}

fn verify_maxlocal(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Vec<BoundCertificate>, CliError> {
    let spec = &cfg.raw.verify.maxlocal;
    let settings = MaxLocalSettings {
        eps: spec.eps,
        m: spec.m,
        t_grid: spec.t_grid.clone(),
        max_violation_fraction: spec.max_violation_fraction,
        ..MaxLocalSettings::default()
    };
    let report = run_maxlocal(&cfg.experiment, &settings)?;
    out.table(
        "maxlocal_tail.csv",
        &["n", "t", "frequency", "bound", "std_error", "holds"],
        report.checkpoints.iter().flat_map(|cp| {
            cp.tail.iter().map(move |t| {
                vec![cp.n.to_string(), t.t.to_string(), num(t.frequency), num(t.bound), num(t.std_error), t.holds.to_string()]
            })
        }),
    )?;
    out.table(
        "maxlocal_summary.csv",
        &["n", "proposition_bound", "violation_fraction", "ratio_mean", "ratio_min", "ratio_max", "inverse_lambda"],
        report.checkpoints.iter().map(|cp| {
            let (a, b, c) = cp.ratio_to_log.map_or((None, None, None), |(a, b, c)| (Some(a), Some(b), Some(c)));
            vec![
                cp.n.to_string(),
                opt(cp.proposition_bound),
                opt(cp.violation_fraction),
                opt(a),
                opt(b),
                opt(c),
                num(report.inverse_lambda),
            ]
        }),
    )?;
    Ok(vec![report.certificate])
}

fn verify_conditions(cfg: &LoadedConfig) -> Result<Vec<BoundCertificate>, CliError> {
    let spec = &cfg.raw.verify.conditions;
    let grid = spec.grid.clone().unwrap_or_else(default_condition_grid);
    let mode = match spec.mode.as_str() {
        "log" => ConditionMode::Log,
        "eta" => ConditionMode::Eta(
            spec.eta.ok_or_else(|| CliError::field("verify.conditions.eta", "mode eta needs a value"))?,
        ),
        other => return Err(CliError::field("verify.conditions.mode", format!("unknown mode {other}"))),
    };
    let h = grid.iter().copied().max().unwrap_or(2);
    let u = compute_u_series(&cfg.experiment.dist, h, cfg.experiment.mem_cap)?;
    Ok(vec![condition_check(&u, mode, &grid)?])
}

fn verify_subsequence(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Vec<BoundCertificate>, CliError> {
    let spec = &cfg.raw.verify.subsequence;
    let source = match (&spec.values, spec.sequence.as_str()) {
        (Some(v), _) => VSource::Values(v.clone()),
        (None, "inverse_square") => VSource::inverse_square(),
        (None, "constant") => VSource::constant(spec.constant),
        (None, "inverse") => VSource::Function { v: Arc::new(|n| 1.0 / n as f64), decreasing: true },
        (None, other) => {
            return Err(CliError::field("verify.subsequence.sequence", format!("unknown sequence {other}")))
        }
    };
    let mut rows = Vec::new();
    let mut certs = Vec::new();
    for &delta in &spec.deltas {
        let plan = build_subsequence(&source, delta, spec.blocks)?;
        for (r, &(lo, hi)) in plan.blocks.iter().enumerate() {
            rows.push(vec![
                num(delta),
                (r + 1).to_string(),
                lo.to_string(),
                hi.to_string(),
                plan.n[r].to_string(),
                num(plan.values[r]),
                num(plan.partial_sums[r]),
                num(plan.block_harmonic[r]),
            ]);
        }
        let mut c = plan.certificate;
        c.name = format!("subsequence delta={delta}");
        certs.push(c);
    }
    out.table(
        "subsequence.csv",
        &["delta", "r", "block_lo", "block_hi", "n_r", "v", "partial_sum", "block_harmonic"],
        rows,
    )?;
    Ok(certs)
}
