//! Vehicle-level failure-rate (MTBF) estimation for automated vehicles.
//!
//! The crate links perception error rates to collision rates through the
//! probability of being in a potentially dangerous traffic situation:
//!
//! - [`kinematics`]: car-following collision kinematics, RSS distance, TTC and
//!   severity classification.
//! - [`perception`]: error taxonomy, safety relevance and per-speed-range
//!   error rates from perception logs.
//! - [`situations`]: naturalistic trajectory ingestion and situation
//!   probabilities per speed range.
//! - [`model`]: the probability-tree failure model, forward and inverse.
//! - [`montecarlo`]: Poisson/Bernoulli thinning simulation used as an
//!   independent check of the analytical model.
//!
//! All speeds are m/s internally; [`units`] holds the km/h conversions used
//! at I/O boundaries.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod kinematics;
pub mod model;
pub mod montecarlo;
pub mod perception;
pub mod situations;
pub mod units;

mod numfmt;

pub use kinematics::{BrakingProfile, FollowState, RssParams, SeverityClass, SeverityThresholds};
pub use model::{FailureModelTree, MissionProfile, ModelResult};
pub use perception::{ErrorRateTable, ErrorType, ObjectObservation, PerceptionLog};
pub use situations::{SituationTable, SpeedRangePartition};
