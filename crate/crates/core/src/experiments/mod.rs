//! Replicated simulations and the statistical checks run on them.

mod config;
mod gamma_mc;
mod maxlocal;
mod slln;
mod stats;
mod subsequence;
mod truncation;
mod variance;

use rayon::prelude::*;
use thiserror::Error;

use crate::exact::ExactError;
use crate::local_times::{Checkpoint, LocalTimeError, LocalTimeState, ObservableF};
use crate::walk::{StepDistribution, WalkGenerator};

pub use config::{resolve_gamma, ExperimentConfig, GammaInfo, GammaSource, Schedule};
pub use gamma_mc::{estimate_gamma_mc, GammaMc, MIN_GAMMA_REPLICAS};
pub use maxlocal::{run_maxlocal, MaxLocalCheckpoint, MaxLocalReport, MaxLocalSettings, TailRow};
pub use slln::{aggregate, run_slln, Channel, ConvergenceReport, ConvergenceRow, CrossCheck};
pub use stats::{wilson_interval, Moments};
pub use subsequence::{build_subsequence, harmonic, SubsequencePlan, VSource};
pub use truncation::{run_truncation_split, SplitCheckpoint, SplitReport};
pub use variance::{
    exhaustive, verify_variance, verify_variance_exhaustive, ExhaustiveMoments, VarianceCheck, VarianceRow,
    MAX_EXHAUSTIVE_PATHS, MIN_VARIANCE_REPLICAS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("walk is recurrent (escape probability estimate {gamma}); refusing to run")]
    RecurrentWalkRefused { gamma: f64 },
    #[error("walk never returns (escape probability 1); set allow_degenerate to run anyway")]
    DegenerateWalkRefused,
    #[error("need at least {need} replicas, got {got}")]
    TooFewReplicas { got: u64, need: u64 },
    #[error("delta must lie in (0,3), got {0}")]
    DeltaOutOfRange(f64),
    #[error("{0}")]
    ResourceLimit(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    LocalTime(#[from] LocalTimeError),
}

/// Checkpoints of one replica trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaTrace {
    pub replica: u64,
    pub checkpoints: Vec<Checkpoint>,
}

/// Runs `f` on a dedicated pool when a thread count is given.
pub(crate) fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ExperimentError::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Simulates one replica up to the last of `times`, checkpointing at each.
pub fn simulate_replica(
    dist: &StepDistribution,
    observables: &[ObservableF],
    alphas: &[f64],
    seed: u64,
    replica: u64,
    times: &[u64],
    with_histogram: bool,
) -> Result<ReplicaTrace, LocalTimeError> {
    let mut gen = WalkGenerator::new(dist, seed, replica);
    let mut state = LocalTimeState::new(dist.dim(), observables.iter().cloned());
    let mut checkpoints = Vec::with_capacity(times.len());
    for &t in times {
        while state.n() < t {
            state.ingest_step(gen.next_step());
        }
        checkpoints.push(state.checkpoint(alphas, with_histogram)?);
    }
    Ok(ReplicaTrace { replica, checkpoints })
}

/// All replicas of a configuration, in replica order.
pub fn simulate(cfg: &ExperimentConfig, with_histogram: bool) -> Result<Vec<ReplicaTrace>, ExperimentError> {
    let times = cfg.validate()?;
    let traces = in_pool(cfg.threads, || {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| simulate_replica(&cfg.dist, &cfg.observables, &cfg.alphas, cfg.seed, r, &times, with_histogram))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::Probability;

    #[test]
    fn replicas_are_thread_count_independent() {
        let mut cfg = ExperimentConfig::new(StepDistribution::biased1d(Probability::ratio(2, 3)).unwrap(), 64, 6, 11);
        cfg.observables = vec![ObservableF::power(2.0).unwrap()];
        cfg.alphas = vec![0.0, 1.0];
        cfg.threads = Some(1);
        let one = simulate(&cfg, true).unwrap();
        cfg.threads = Some(3);
        let three = simulate(&cfg, true).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.len(), 6);
        assert_eq!(one[0].checkpoints.len(), 7);
        for trace in &one {
            for cp in &trace.checkpoints {
                assert_eq!(cp.l[1], (cp.n + 1) as f64);
                let h = cp.histogram.as_ref().unwrap();
                assert_eq!(h.total_visits(), cp.n + 1);
                assert_eq!(h.range(), cp.range);
            }
        }
    }
}
