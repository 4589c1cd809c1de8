//! Local differential privacy frequency oracles: fourteen randomizers,
//! matrix-inversion and iterative Bayesian update estimators, synthetic
//! workloads and the benchmark runner behind the `ldpfo` binary.

pub mod bench;
pub mod data;
pub mod error;
pub mod estimation;
pub mod hash;
pub mod longitudinal;
pub mod mechanism;
pub mod metrics;
pub mod oneshot;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use estimation::{estimate, Estimate, Estimator, IbuConfig};
pub use mechanism::Mechanism;
pub use types::{
    Budget, Distribution, DomainSize, LongitudinalBudget, MechanismId, MechanismSpec,
    PrivacyBudget, Report,
};
