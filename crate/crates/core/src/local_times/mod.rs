//! Streaming local times, the multiplicity histogram `Q_n(j)` and the
//! functionals `G_n(f)` and `L_n(α)` built on it.

mod observable;
mod state;

use thiserror::Error;

pub use observable::{check_condition_f, GrowthClass, IndicatorSet, ObservableF, TailRule};
pub use state::{Checkpoint, Histogram, LocalTimeState, ObservableId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalTimeError {
    #[error("observable #{0} was not registered with this state")]
    UnregisteredObservable(usize),
    #[error("alpha must be a finite non-negative number, got {0}")]
    NegativeAlpha(f64),
}
