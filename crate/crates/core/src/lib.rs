//! Local times of transient random walks on `Z^d`: simulation of the
//! multiplicity histogram, exact renewal-based expectations and numerical
//! checks of the associated limit theorems and bounds.

pub mod certificate;
pub mod exact;
pub mod experiments;
pub mod local_times;
pub mod walk;

pub use certificate::{BoundCertificate, EvidenceRow, Verdict};
pub use exact::{ExactError, ReturnSeries};
pub use experiments::{ExperimentConfig, ExperimentError};
pub use local_times::{Histogram, LocalTimeState, ObservableF};
pub use walk::{Probability, Site, StepDistribution, WalkError, WalkGenerator};
