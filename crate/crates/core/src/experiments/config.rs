use super::ExperimentError;
use crate::exact::{ReturnSeries, TransienceStatus};
use crate::local_times::ObservableF;
use crate::walk::StepDistribution;

/// Checkpoint times at which replica statistics are recorded.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// `first, ⌈first·ρ⌉, …` strictly increasing, always ending at `n_max`.
    Geometric { first: u64, ratio: f64 },
    Explicit(Vec<u64>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Geometric { first: 1, ratio: 2.0 }
    }
}

impl Schedule {
    pub fn times(&self, n_max: u64) -> Result<Vec<u64>, ExperimentError> {
        match self {
            Schedule::Geometric { first, ratio } => {
                if !(*ratio > 1.0) {
                    return Err(ExperimentError::InvalidConfig(format!("schedule ratio must exceed 1, got {ratio}")));
                }
                if *first == 0 || *first > n_max {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "first checkpoint {first} must lie in 1..=n_max ({n_max})"
                    )));
                }
                let mut out = vec![*first];
                let mut x = *first as f64;
                loop {
                    x *= ratio;
                    let next = (x.ceil() as u64).max(out[out.len() - 1] + 1);
                    if next >= n_max {
                        break;
                    }
                    out.push(next);
                }
                if out[out.len() - 1] != n_max {
                    out.push(n_max);
                }
                Ok(out)
            }
            Schedule::Explicit(ts) => {
                let mut out = ts.clone();
                out.sort_unstable();
                out.dedup();
                match out.last() {
                    None => Err(ExperimentError::InvalidConfig("checkpoint list is empty".into())),
                    Some(&last) if last > n_max => Err(ExperimentError::InvalidConfig(format!(
                        "checkpoint {last} exceeds n_max ({n_max})"
                    ))),
                    Some(_) => Ok(out),
                }
            }
        }
    }
}

/// Where verifiers take the escape probability from.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaSource {
    /// A known closed-form value.
    Pinned(f64),
    /// The tail-corrected estimate from the return series up to `horizon`.
    Series { horizon: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dist: StepDistribution,
    pub observables: Vec<ObservableF>,
    pub alphas: Vec<f64>,
    pub replicas: u64,
    pub n_max: u64,
    pub schedule: Schedule,
    pub seed: u64,
    pub gamma: GammaSource,
    /// Permit runs on walks certified as degenerate (`γ = 1`).
    pub allow_degenerate: bool,
    /// Largest checkpoint compared against exact expectations; 0 disables.
    pub exact_horizon: usize,
    /// Byte budget for dense return-probability tables.
    pub mem_cap: usize,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(dist: StepDistribution, n_max: u64, replicas: u64, seed: u64) -> Self {
        ExperimentConfig {
            dist,
            observables: Vec::new(),
            alphas: Vec::new(),
            replicas,
            n_max,
            schedule: Schedule::default(),
            seed,
            gamma: GammaSource::Series { horizon: 2048 },
            allow_degenerate: false,
            exact_horizon: 0,
            mem_cap: 1 << 30,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<Vec<u64>, ExperimentError> {
        if self.replicas == 0 {
            return Err(ExperimentError::InvalidConfig("replicas must be at least 1".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(ExperimentError::InvalidConfig(format!("alpha must be non-negative, got {a}")));
        }
        self.schedule.times(self.n_max)
    }
}

/// Escape probability used by a run, with the transience verdict behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaInfo {
    pub value: f64,
    pub status: TransienceStatus,
    /// Present when the value came from a return series.
    pub series: Option<ReturnSeries>,
}

pub fn resolve_gamma(cfg: &ExperimentConfig) -> Result<GammaInfo, ExperimentError> {
    match cfg.gamma {
        GammaSource::Pinned(g) => {
            if !(0.0..=1.0).contains(&g) {
                return Err(ExperimentError::InvalidConfig(format!("pinned gamma must lie in [0,1], got {g}")));
            }
            let status = if g < 1e-9 {
                TransienceStatus::Recurrent
            } else if g > 1.0 - 1e-12 {
                TransienceStatus::TrivialTransient
            } else {
                TransienceStatus::Transient
            };
            Ok(GammaInfo { value: g, status, series: None })
        }
        GammaSource::Series { horizon } => {
            let series = ReturnSeries::compute(&cfg.dist, horizon, cfg.mem_cap)?;
            Ok(GammaInfo { value: series.gamma.gamma_estimate, status: series.gamma.status, series: Some(series) })
        }
    }
}

/// Refuses recurrent walks, and degenerate ones unless overridden.
pub(crate) fn require_transient(info: &GammaInfo, allow_degenerate: bool) -> Result<(), ExperimentError> {
    match info.status {
        TransienceStatus::Recurrent => Err(ExperimentError::RecurrentWalkRefused { gamma: info.value }),
        TransienceStatus::TrivialTransient if !allow_degenerate => Err(ExperimentError::DegenerateWalkRefused),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_schedule() {
        let s = Schedule::default();
        assert_eq!(s.times(8).unwrap(), vec![1, 2, 4, 8]);
        assert_eq!(s.times(10).unwrap(), vec![1, 2, 4, 8, 10]);
        assert_eq!(s.times(1).unwrap(), vec![1]);
        let s = Schedule::Geometric { first: 10, ratio: 1.5 };
        assert_eq!(s.times(40).unwrap(), vec![10, 15, 23, 34, 40]);
        assert!(Schedule::Geometric { first: 1, ratio: 1.0 }.times(8).is_err());
        assert!(Schedule::Geometric { first: 9, ratio: 2.0 }.times(8).is_err());
        assert_eq!(Schedule::Explicit(vec![8, 2, 2]).times(8).unwrap(), vec![2, 8]);
        assert!(Schedule::Explicit(vec![9]).times(8).is_err());
    }
}
