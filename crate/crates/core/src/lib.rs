//! Joint two-way energy trading and cooperative downlink beamforming for
//! smart-grid powered CoMP clusters.
//!
//! The solvers minimize the cluster's net energy bill subject to per-MT SINR
//! targets and per-BS transmit power caps:
//!
//! * [`solve_joint`]: optimal beamforming via Lagrange duality, an ellipsoid
//!   search over the dual prices and an uplink-downlink duality fixed point;
//! * [`solve_zf`]: the same with zero-forcing beams in closed form;
//! * [`conventional_optimal`] and [`conventional_zf`]: sum-power beamforming
//!   followed by independent trading, for comparison.
//!
//! [`scenario`] runs all schemes over a renewable-energy timeline.

// Checks written as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod dual;
pub mod duality;
pub mod ellipsoid;
pub mod error;
pub mod feasibility;
pub mod fixtures;
mod linalg;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod zf;

pub use baselines::{conventional_optimal, conventional_zf};
pub use dual::SolverOptions;
pub use duality::{solve_joint, FixedPointOptions, WeightedNoise};
pub use ellipsoid::EllipsoidOptions;
pub use error::{Error, Result};
pub use feasibility::{check_feasible, check_zf_feasible, Feasibility, FeasibilityOptions};
pub use model::{
    BeamformingSolution, CVector, ChannelSet, ClusterConfig, EnergyInputs, EnergySchedule, ProblemInstance, QosTargets,
    Scheme, SolveOutcome,
};
pub use zf::solve_zf;
