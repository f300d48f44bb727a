use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::config::require_transient;
use super::{in_pool, resolve_gamma, simulate, ExperimentConfig, ExperimentError, Moments};
use crate::certificate::{BoundCertificate, EvidenceRow};
use crate::exact::{variance_bound, ExactError, ExactQTable, ReturnSeries, VarianceBound};
use crate::local_times::{LocalTimeState, ObservableF, ObservableId};
use crate::walk::StepDistribution;

/// Fewest replicas for which a chi-square interval on the variance is trusted.
pub const MIN_VARIANCE_REPLICAS: u64 = 50;
/// Largest number of paths the exhaustive mode will enumerate.
pub const MAX_EXHAUSTIVE_PATHS: u128 = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub n: u64,
    /// Sample variance of `G_n(f)` (exact in exhaustive mode).
    pub variance: f64,
    /// Two-sided 99% chi-square interval for the variance.
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: VarianceBound,
    /// `Var(G_n(f)/n)`.
    pub scaled_variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceCheck {
    pub certificate: BoundCertificate,
    pub rows: Vec<VarianceRow>,
    /// `Var(G_n/n)` decreases from each checkpoint to the next.
    pub trend_decreasing: bool,
}

fn check_monotone(f: &ObservableF, n_max: u64, split: bool) -> Result<(), ExperimentError> {
    if split || f.is_non_decreasing_upto(n_max + 1) {
        return Ok(());
    }
    let at = (1..=n_max + 1).find(|&i| f.eval(i) < f.eval(i - 1)).unwrap_or(0);
    Err(ExactError::NotMonotone { at }.into())
}

fn bound_inputs(cfg: &ExperimentConfig, times: &[u64]) -> Result<(f64, ReturnSeries, ExactQTable), ExperimentError> {
    let info = resolve_gamma(cfg)?;
    require_transient(&info, cfg.allow_degenerate)?;
    let n_max = *times.last().unwrap_or(&0) as usize;
    let series = match info.series {
        Some(s) if s.horizon() >= n_max => s,
        _ => ReturnSeries::compute(&cfg.dist, n_max, cfg.mem_cap)?,
    };
    let ns: Vec<usize> = times.iter().map(|&t| t as usize).collect();
    let table = ExactQTable::build(&series, &ns, None)?;
    Ok((info.value, series, table))
}

fn finish(f: &ObservableF, rows: Vec<VarianceRow>, replicas: f64) -> VarianceCheck {
    let trend_decreasing = rows.windows(2).all(|w| w[1].scaled_variance <= w[0].scaled_variance);
    let evidence = rows
        .iter()
        .map(|r| EvidenceRow {
            n: r.n,
            label: "Var G_n".into(),
            empirical: r.ci_low,
            bound: r.bound.bound,
            holds: r.ci_low <= r.bound.bound * (1.0 + 1e-12),
        })
        .collect();
    let params = vec![
        ("replicas".to_string(), replicas),
        ("trend_decreasing".to_string(), if trend_decreasing { 1.0 } else { 0.0 }),
    ];
    let certificate = BoundCertificate::from_rows(format!("variance-bound {f}"), params, evidence);
    VarianceCheck { certificate, rows, trend_decreasing }
}

/// Compares the replica variance of `G_n(f)` at each checkpoint with the
/// second-moment bound. The bound holds when it is at least the lower end of
/// the 99% chi-square interval of the sample variance.
pub fn verify_variance(cfg: &ExperimentConfig, f: &ObservableF, split: bool) -> Result<VarianceCheck, ExperimentError> {
    let times = cfg.validate()?;
    if cfg.replicas < MIN_VARIANCE_REPLICAS {
        return Err(ExperimentError::TooFewReplicas { got: cfg.replicas, need: MIN_VARIANCE_REPLICAS });
    }
    check_monotone(f, cfg.n_max, split)?;
    let (gamma, series, table) = bound_inputs(cfg, &times)?;

    let mut run = cfg.clone();
    run.observables = vec![f.clone()];
    run.alphas = Vec::new();
    let traces = simulate(&run, false)?;

    let dof = (cfg.replicas - 1) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    let (q_hi, q_lo) = (chi.inverse_cdf(0.995), chi.inverse_cdf(0.005));
    let mut rows = Vec::with_capacity(times.len());
    for (k, &n) in times.iter().enumerate() {
        let m: Moments = traces.iter().map(|t| t.checkpoints[k].g[0]).collect();
        let var = m.variance();
        let bound = variance_bound(&table, &series.u, f, n as usize, gamma, split)?;
        rows.push(VarianceRow {
            n,
            variance: var,
            ci_low: dof * var / q_hi,
            ci_high: dof * var / q_lo,
            bound,
            scaled_variance: var / (n as f64 * n as f64),
        });
    }
    Ok(finish(f, rows, cfg.replicas as f64))
}

/// Same comparison with the variance computed by weighting every path.
pub fn verify_variance_exhaustive(
    cfg: &ExperimentConfig,
    f: &ObservableF,
    split: bool,
) -> Result<VarianceCheck, ExperimentError> {
    let times = cfg.validate()?;
    check_monotone(f, cfg.n_max, split)?;
    let (gamma, series, table) = bound_inputs(cfg, &times)?;
    let mut rows = Vec::with_capacity(times.len());
    for &n in &times {
        let ex = exhaustive(&cfg.dist, n, std::slice::from_ref(f))?;
        let var = ex.variance[0];
        rows.push(VarianceRow {
            n,
            variance: var,
            ci_low: var,
            ci_high: var,
            bound: variance_bound(&table, &series.u, f, n as usize, gamma, split)?,
            scaled_variance: var / (n as f64 * n as f64).max(1.0),
        });
    }
    Ok(finish(f, rows, 0.0))
}

/// Exact moments over all `|support|^n` paths.
#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustiveMoments {
    pub n: u64,
    pub paths: u64,
    /// `E G_n(f)` per observable.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `eq[j-1] = E Q_n(j)`.
    pub eq: Vec<f64>,
}

/// Enumerates every path of length `n` and weights it by its probability.
pub fn exhaustive(dist: &StepDistribution, n: u64, fs: &[ObservableF]) -> Result<ExhaustiveMoments, ExperimentError> {
    let k = dist.support_size() as u128;
    let paths = k.checked_pow(n as u32).filter(|&p| p <= MAX_EXHAUSTIVE_PATHS).ok_or_else(|| {
        ExperimentError::ResourceLimit(format!("{k}^{n} paths exceed the exhaustive limit of {MAX_EXHAUSTIVE_PATHS}"))
    })? as u64;
    let atoms = dist.atoms();
    let probs = dist.probs();
    let per_path: Vec<(f64, Vec<f64>, Vec<u64>)> = in_pool(None, || {
        (0..paths)
            .into_par_iter()
            .map(|code| {
                let mut state = LocalTimeState::new(dist.dim(), fs.iter().cloned());
                let mut w = 1.0;
                let mut c = code;
                for _ in 0..n {
                    let i = (c % k as u64) as usize;
                    c /= k as u64;
                    w *= probs[i];
                    state.ingest_step(&atoms[i]);
                }
                let g: Vec<f64> = (0..fs.len()).map(|i| state.functional_g(ObservableId(i)).unwrap_or(0.0)).collect();
                let h = state.histogram();
                let q: Vec<u64> = (1..=h.l_max()).map(|j| h.get(j)).collect();
                (w, g, q)
            })
            .collect()
    })?;
    let mut mean = vec![0.0; fs.len()];
    let mut eq = vec![0.0; n as usize + 1];
    for (w, g, q) in &per_path {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += w * v;
        }
        for (e, c) in eq.iter_mut().zip(q) {
            *e += w * *c as f64;
        }
    }
    let mut variance = vec![0.0; fs.len()];
    for (w, g, _) in &per_path {
        for ((s, v), m) in variance.iter_mut().zip(g).zip(&mean) {
            *s += w * (v - m) * (v - m);
        }
    }
    while eq.last() == Some(&0.0) {
        eq.pop();
    }
    Ok(ExhaustiveMoments { n, paths, mean, variance, eq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{GammaSource, Schedule};
    use crate::walk::Probability;

    fn biased_cfg(n_max: u64, replicas: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(StepDistribution::biased1d(Probability::ratio(2, 3)).unwrap(), n_max, replicas, 3);
        cfg.gamma = GammaSource::Pinned(1.0 / 3.0);
        cfg
    }

    #[test]
    fn two_step_enumeration() {
        let d = StepDistribution::biased1d(Probability::ratio(2, 3)).unwrap();
        let ex = exhaustive(&d, 2, &[ObservableF::at_least(1)]).unwrap();
        assert_eq!(ex.paths, 4);
        assert!((ex.mean[0] - 23.0 / 9.0).abs() < 1e-15);
        assert!((ex.variance[0] - 20.0 / 81.0).abs() < 1e-15);
        assert!((ex.eq[0] - 19.0 / 9.0).abs() < 1e-15);
        assert!((ex.eq[1] - 4.0 / 9.0).abs() < 1e-15);
        assert!(exhaustive(&d, 30, &[]).is_err());
    }

    #[test]
    fn exhaustive_bound_at_two_steps() {
        let mut cfg = biased_cfg(2, 1);
        cfg.schedule = Schedule::Explicit(vec![2]);
        let check = verify_variance_exhaustive(&cfg, &ObservableF::at_least(1), false).unwrap();
        assert!(check.certificate.holds());
        assert!((check.rows[0].variance - 20.0 / 81.0).abs() < 1e-15);
        assert!((check.rows[0].bound.bound - 23.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn linear_observable_has_zero_variance() {
        let mut cfg = biased_cfg(128, 50);
        cfg.schedule = Schedule::Geometric { first: 8, ratio: 4.0 };
        let check = verify_variance(&cfg, &ObservableF::power(1.0).unwrap(), false).unwrap();
        assert!(check.certificate.holds());
        assert!(check.rows.iter().all(|r| r.variance == 0.0 && r.bound.bound >= 0.0));
    }

    #[test]
    fn preconditions() {
        let cfg = biased_cfg(16, 10);
        assert!(matches!(
            verify_variance(&cfg, &ObservableF::at_least(1), false),
            Err(ExperimentError::TooFewReplicas { got: 10, need: 50 })
        ));
        let cfg = biased_cfg(16, 60);
        assert!(matches!(
            verify_variance(&cfg, &ObservableF::exactly([1]), false),
            Err(ExperimentError::Exact(ExactError::NotMonotone { at: 2 }))
        ));
    }
}
