use super::config::require_transient;
use super::{resolve_gamma, simulate, ExperimentConfig, ExperimentError};
use crate::exact::{maxlocal_proposition_bound, truncation_thresholds, Thresholds, TruncationCase};
use crate::local_times::ObservableF;

/// Split of `G_n(f)` at one checkpoint across replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCheckpoint {
    pub n: u64,
    pub thresholds: Thresholds,
    /// `[bulk, band, remainder]` per replica: the parts of `G_n(f)` from local
    /// times up to the lower cut, between the cuts, and above the upper cut
    /// (above the lower cut when there is only one).
    pub components: Vec<[f64; 3]>,
    /// Largest `|bulk + band + remainder - G_n(f)| / max(1, |G_n(f)|)`.
    pub partition_error: f64,
    pub remainder_nonzero: f64,
    /// Fraction of replicas with `l(n)` above the top cut.
    pub above_top_cut: f64,
    pub proposition_bound: f64,
    pub proposition_violations: f64,
    /// Replicas with `l(n)` at most the lower cut and a nonzero band or remainder.
    pub below_cut_leaks: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitReport {
    pub observable: String,
    pub gamma: f64,
    pub checkpoints: Vec<SplitCheckpoint>,
}

/// Decomposes `G_n(f)` at the truncation cuts for every replica and
/// checkpoint. Violations of the eventual bound on `l(n)` use `eps` and `m`.
pub fn run_truncation_split(
    cfg: &ExperimentConfig,
    f: &ObservableF,
    case: TruncationCase,
    eps: f64,
    m: u32,
) -> Result<SplitReport, ExperimentError> {
    let times = cfg.validate()?;
    let info = resolve_gamma(cfg)?;
    require_transient(&info, false)?;
    let gamma = info.value;
    let cuts: Vec<Thresholds> =
        times.iter().map(|&n| truncation_thresholds(n as f64, gamma, case)).collect::<Result<_, _>>()?;
    let props: Vec<f64> =
        times.iter().map(|&n| maxlocal_proposition_bound(n as f64, eps, m, gamma)).collect::<Result<_, _>>()?;

    let mut run = cfg.clone();
    run.observables = vec![f.clone()];
    run.alphas = Vec::new();
    let traces = simulate(&run, true)?;
    let r = cfg.replicas as f64;

    let mut checkpoints = Vec::with_capacity(times.len());
    for (k, &n) in times.iter().enumerate() {
        let t = cuts[k];
        let top = t.upper.unwrap_or(t.lower);
        let mut components = Vec::with_capacity(traces.len());
        let mut partition_error: f64 = 0.0;
        let (mut rem_nonzero, mut above, mut violations, mut leaks) = (0u64, 0u64, 0u64, 0u64);
        for trace in &traces {
            let cp = &trace.checkpoints[k];
            let hist = cp.histogram.as_ref().expect("histograms requested");
            let mut parts = [0.0; 3];
            for (j, q) in hist.iter() {
                let jf = j as f64;
                let slot = if jf <= t.lower {
                    0
                } else if t.upper.is_some_and(|u| jf <= u) {
                    1
                } else {
                    2
                };
                parts[slot] += f.eval(j as u64) * q as f64;
            }
            let g = cp.g[0];
            partition_error = partition_error.max((parts.iter().sum::<f64>() - g).abs() / g.abs().max(1.0));
            let l = cp.l_max as f64;
            rem_nonzero += (parts[2] != 0.0) as u64;
            above += (l > top) as u64;
            violations += (l > props[k]) as u64;
            leaks += (l <= t.lower && (parts[1] != 0.0 || parts[2] != 0.0)) as u64;
            components.push(parts);
        }
        checkpoints.push(SplitCheckpoint {
            n,
            thresholds: t,
            components,
            partition_error,
            remainder_nonzero: rem_nonzero as f64 / r,
            above_top_cut: above as f64 / r,
            proposition_bound: props[k],
            proposition_violations: violations as f64 / r,
            below_cut_leaks: leaks,
        });
    }
    Ok(SplitReport { observable: f.label(), gamma, checkpoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{lambda_star, ExactError};
    use crate::experiments::{GammaSource, Schedule};
    use crate::walk::{Probability, StepDistribution};

    fn cfg(n_max: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(StepDistribution::biased1d(Probability::ratio(2, 3)).unwrap(), n_max, 20, 4);
        c.gamma = GammaSource::Pinned(1.0 / 3.0);
        c.schedule = Schedule::Geometric { first: 100, ratio: 10.0 };
        c
    }

    #[test]
    fn components_partition_the_functional() {
        let f = ObservableF::ExpCapped { c: lambda_star(1.0 / 3.0).unwrap(), p: 2.5 };
        let report = run_truncation_split(&cfg(10_000), &f, TruncationCase::Polynomial { eta: 0.5 }, 1.0, 2).unwrap();
        for cp in &report.checkpoints {
            assert!(cp.partition_error < 1e-12);
            assert_eq!(cp.below_cut_leaks, 0);
            assert!(cp.components.iter().all(|c| c[1] == 0.0));
        }
        let report = run_truncation_split(&cfg(10_000), &f, TruncationCase::Logarithmic, 1.0, 2).unwrap();
        for cp in &report.checkpoints {
            assert!(cp.partition_error < 1e-12);
            assert_eq!(cp.below_cut_leaks, 0);
            assert_eq!(cp.remainder_nonzero, cp.above_top_cut);
        }
    }

    #[test]
    fn small_times_are_rejected() {
        let mut c = cfg(8);
        c.schedule = Schedule::Explicit(vec![3, 8]);
        let err = run_truncation_split(&c, &ObservableF::power(1.0).unwrap(), TruncationCase::Logarithmic, 1.0, 2);
        assert!(matches!(err, Err(ExperimentError::Exact(ExactError::IteratedLogUndefined { .. }))));
    }
}
