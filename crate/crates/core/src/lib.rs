//! Flexible beamforming for movable-antenna integrated sensing and
//! communication.
//!
//! A base station with a linear array of movable antennas serves `K`
//! single-antenna users and illuminates one radar target among `C` clutter
//! scatterers. [`solver::solve`] jointly optimizes the transmit beamformer
//! and the antenna positions to maximize a weighted sum of the users' rates
//! and the sensing mutual information, using a fractional-programming
//! surrogate with closed-form block updates.

pub mod error;
pub mod fp_core;
pub mod harness;
pub mod metrics;
pub mod model;
#[cfg(feature = "oracles")]
pub mod oracles;
pub mod position_opt;
pub mod solver;

pub use error::{Error, Result};
pub use fp_core::{AuxiliaryState, BisectionConfig, QuadraticForm};
pub use metrics::{Beamformer, MetricsReport, Weights};
pub use model::{ArrayGeometry, PathCluster, Scenario, ScenarioParams};
pub use position_opt::{PositionOptConfig, ProjectionResult};
pub use solver::{Algorithm, SolveResult, SolverConfig};
