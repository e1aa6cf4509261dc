//! Trajectory tracking for a quadrotor that has lost one rotor.
//!
//! The vehicle keeps three rotors and gives up yaw control. A reduced-attitude
//! backstepping law steers the thrust axis, a nested-saturation law shapes the
//! thrust vector, and an exact three-rotor allocation maps both onto blade
//! pitches. The crate also carries the nonlinear plant, a Lie-group RK4
//! integrator, a scenario runner and a gain certificate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod attitude;
pub mod certify;
pub mod control;
pub mod geometry;
pub mod par;
pub mod plant;
pub mod position;
pub mod reference;
pub mod sim;
pub mod sweep;

use thiserror::Error;

pub use control::{Controller, ControllerConfig, OmegaRateSource};
pub use geometry::{RotationMatrix, TangentVector, UnitVector3, Vec2, Vec3};
pub use plant::{InertialParams, RigidBodyState, RotorMode, RotorParams};
pub use sim::{run_scenario, RunOutput, RunStatus, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged at t = {t:.3} s: {reason}")]
    Diverged { t: f64, reason: String },
    #[error("thrust command degenerate at t = {t:.3} s (|f_hat| = {norm:.3e} N)")]
    DegenerateThrust { t: f64, norm: f64 },
}

impl SimError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Diverged { .. } => 2,
            SimError::InvalidConfig(_) => 3,
            SimError::DegenerateThrust { .. } => 4,
        }
    }
}
