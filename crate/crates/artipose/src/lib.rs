//! State estimation for articulated vehicles carrying four GNSS antennas.
//!
//! Each epoch, absolute per-antenna fixes, ambiguity-fixed inter-antenna
//! baselines, and rigid-body spacing priors are fused in a robust
//! factor-graph optimization over the four antenna positions; the vehicle's
//! orientation, articulation angle, and control-point position are then
//! derived from the solved geometry. A measurement simulator and an
//! evaluation harness reproduce the static and figure-eight test protocols
//! at desk scale.
//!
//! The `artipose` binary ties the pieces into three subcommands:
//! `simulate`, `estimate`, and `evaluate`. See the crate README for the file
//! formats and a worked example.

pub mod config;
pub mod eval;
pub mod factor_graph;
pub mod geodesy;
pub mod pipeline;
pub mod records;
pub mod sim;
pub mod vehicle;

pub use config::{Mode, RunConfig};
pub use factor_graph::{
    solve_epoch, AntennaId, AntennaStateVector, BaselineObservation, BaselinePrior, ClasFix,
    ClasStatus, Covariance3, EpochProblem, SolveReport, SolverSettings,
};
pub use geodesy::{EnuOrigin, EnuPosition, GeodeticPosition};
pub use vehicle::{derive_vehicle_state, Quality, VehicleConfig, VehicleState};
