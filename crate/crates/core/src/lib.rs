//! Aging branching processes and the bus-line queue they describe.

pub mod branching;
pub mod bus;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod leslie;
pub mod means;
pub mod profile;
pub mod seed;
pub mod stats;

pub use branching::{BranchingModel, ImmigrationSpec, PopulationState, Trajectory};
pub use bus::{BusTrajectory, Discipline, ImmigrationVariant, MergeStatus, TwoBusConfig, TwoBusRun};
pub use distributions::{BusyPeriod, Pmf, QueueParams};
pub use error::{Constraint, Error, Result};
pub use experiments::{ExperimentConfig, ExperimentKind, RunManifest};
pub use leslie::{leslie_gap, leslie_rho, LeslieSpec};
pub use means::{BackwardTable, ForwardMeans, MeanModel, ScaledVec};
pub use profile::{AgeProfile, ProfileFamily, Regime};
