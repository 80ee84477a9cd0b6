//! Off-policy evaluation for contextual bandits.
//!
//! The crate is organised around the pipeline an experiment walks through:
//!
//! * [`data`] loads logged bandit feedback (CSV schema of the public
//!   fashion-recommendation logs), generates synthetic feedback with known
//!   ground truth and provides time splits and bootstrap resampling.
//! * [`policies`] holds the logging policies (uniform random, Bernoulli
//!   Thompson sampling with a top-k variant, an IPW policy learner) and the
//!   [`ActionDist`] they produce.
//! * [`reward_model`] fits a logistic reward regression and scores it.
//! * [`estimators`] implements DM, IPW, SNIPW, DR, SNDR, Switch-DR,
//!   Switch-IPW, DRos and MRDR.
//! * [`protocol`] benchmarks estimators against on-policy ground truth with
//!   bootstrap replications.

pub mod data;
pub mod error;
pub mod estimators;
pub mod policies;
pub mod protocol;
pub mod reward_model;
pub mod rng;

pub use data::{BanditFeedback, SyntheticConfig, SyntheticGroundTruth};
pub use error::{OpeError, Result};
pub use estimators::{EstimatorKind, EstimatorResult, MrdrModel, WeightVector};
pub use policies::{ActionDist, BetaPosteriorState, DeterministicPolicy};
pub use protocol::{ProtocolConfig, ProtocolReport};
pub use reward_model::{FitConfig, RewardModel};
