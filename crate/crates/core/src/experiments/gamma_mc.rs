use rayon::prelude::*;

use super::{in_pool, wilson_interval, ExperimentError};
use crate::walk::{StepDistribution, WalkGenerator};

pub const MIN_GAMMA_REPLICAS: u64 = 100;

/// Monte Carlo estimate of `γ_n = P{no return to the origin by time n}`.
///
/// `γ_n >= γ`, so the estimate is biased upward by `P{n < τ < ∞}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMc {
    pub horizon: u64,
    pub replicas: u64,
    pub escapes: u64,
    pub estimate: f64,
    /// Wilson 95% interval.
    pub ci: (f64, f64),
}

pub fn estimate_gamma_mc(
    dist: &StepDistribution,
    horizon: u64,
    replicas: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<GammaMc, ExperimentError> {
    if replicas < MIN_GAMMA_REPLICAS {
        return Err(ExperimentError::TooFewReplicas { got: replicas, need: MIN_GAMMA_REPLICAS });
    }
    let escaped = |r: u64| {
        let mut gen = WalkGenerator::new(dist, seed, r);
        let mut pos = vec![0i64; dist.dim()];
        for _ in 0..horizon {
            for (x, dx) in pos.iter_mut().zip(gen.next_step().coords()) {
                *x += dx;
            }
            if pos.iter().all(|&x| x == 0) {
                return false;
            }
        }
        true
    };
    let escapes = in_pool(threads, || (0..replicas).into_par_iter().filter(|&r| escaped(r)).count() as u64)?;
    Ok(GammaMc {
        horizon,
        replicas,
        escapes,
        estimate: escapes as f64 / replicas as f64,
        ci: wilson_interval(escapes, replicas),
    })
}
