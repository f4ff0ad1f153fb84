//! Simulation library for intermediately subcritical branching processes in
//! random environment: tilted environment measures, random-walk fluctuation
//! functionals and renewal h-transforms, size-biased and survival-conditioned
//! tree constructions, and a reproducible rare-event Monte Carlo harness
//! with exact enumeration oracles at desk scale.

pub mod bpre;
pub mod config;
pub mod environment;
pub mod error;
pub mod estimate;
pub mod mc;
pub mod experiments;
pub mod offspring;
pub mod report;
pub mod runner;
pub mod sampler;
pub mod trees;
pub mod util;
pub mod walk;

pub use bpre::{QuenchedEnvironment, Trajectory};
pub use environment::{CalibrationReport, EnvironmentLaw, Measure, ScalingEstimate};
pub use error::{Error, Result};
pub use estimate::{EmpiricalDistribution, Estimate};
pub use offspring::OffspringDistribution;
pub use walk::{WalkPath, WalkStats};
