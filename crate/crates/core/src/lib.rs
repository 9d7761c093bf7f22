//! Minimum-time pursuer/target intercept toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: point-mass flight dynamics, RK4 stepping and a
//!   proportional-navigation target simulator.
//! - [`trajopt`]: sequential convex programming for the free-final-time
//!   intercept problem, backed by an in-crate conic interior-point solver.
//! - [`assignment`]: bottleneck assignment by thresholding plus matching.
//! - [`surrogate`]: a small MLP engine and the two-stage (classifier then
//!   regressor) intercept-time approximator.
//! - [`datagen`]: grid-sampled, labelled datasets for training.
//! - [`harness`]: engagement generation, cost matrices, evaluation metrics,
//!   reports and plots.

pub mod assignment;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod harness;
mod par;
pub mod surrogate;
pub mod trajopt;

pub use assignment::{Assignment, BottleneckResult, CostMatrix, T_INF};
pub use datagen::{Dataset, EngagementClass, LabeledSample, SampleRanges};
pub use dynamics::{Trajectory, Vec3, VehicleParams, VehicleState};
pub use error::{Error, Result};
pub use harness::{Engagement, EvalReport};
pub use par::default_workers;
pub use surrogate::{ApproximatorModel, MlpSpec, MlpWeights, TrainConfig};
pub use trajopt::{ScpConfig, SolveStatus, TrajOptProblem, TrajOptSolution};
