//! The full cascaded controller: reference → thrust vector → reduced-attitude
//! command → rate command → torque → rotor allocation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{allocate, AllocationResult};
use crate::attitude::{
    attitude_torque, desired_omega, lyapunov_v1, AttitudeCommand, AttitudeErrors, AttitudeGains,
    OmegaRateEstimator, TorqueCommand,
};
use crate::geometry::{ErrorFunction, GeometryError, RotationMatrix, Vec2, Vec3};
use crate::plant::{RigidBodyState, RotorParams};
use crate::position::{
    collective_thrust, commanded_reduced_attitude, commanded_thrust_vector, f_hat_rate, qd_rate,
    saturation_args, PositionError, PositionGains, SaturationArgs, ThrustCommand,
    TranslationalErrors,
};
use crate::reference::{Trajectory, TrajectorySample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Attitude(#[from] GeometryError),
    #[error(transparent)]
    Position(#[from] PositionError),
}

/// How the derivative of the rate command is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaRateSource {
    /// Backward difference across control ticks, low-pass filtered.
    Filtered { cutoff: f64 },
    /// Central difference of the rate command along the model vector field,
    /// holding the commanded thrust. Needs no history.
    ModelFlow { step: f64 },
}

impl Default for OmegaRateSource {
    fn default() -> Self {
        OmegaRateSource::ModelFlow { step: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub m: f64,
    pub g: f64,
    /// Nominal principal inertias used by the torque law.
    pub j_nominal: Vec3,
    pub attitude: AttitudeGains,
    pub position: PositionGains,
    pub error_fn: ErrorFunction,
    pub omega_rate: OmegaRateSource,
    pub trajectory: Trajectory,
    /// Control period (s).
    pub dt: f64,
}

/// Everything computed from `(t, x, v, R)` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterLoop {
    pub reference: TrajectorySample,
    pub errors: TranslationalErrors,
    pub thrust: ThrustCommand,
    pub sat_args: SaturationArgs,
    pub omega_d: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub t: f64,
    pub outer: OuterLoop,
    pub command: AttitudeCommand,
    pub attitude_errors: AttitudeErrors,
    pub torque: TorqueCommand,
    pub allocation: AllocationResult,
    pub v1: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    estimator: OmegaRateEstimator,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Self {
        let cutoff = match cfg.omega_rate {
            OmegaRateSource::Filtered { cutoff } => cutoff,
            OmegaRateSource::ModelFlow { .. } => f64::INFINITY,
        };
        let estimator = OmegaRateEstimator::new(cfg.dt, cutoff);
        Self { cfg, estimator }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.estimator.reset();
    }

    /// Position loop and rate command at the given kinematic state.
    pub fn outer_loop(
        &self,
        t: f64,
        x: &Vec3,
        v: &Vec3,
        r: &RotationMatrix,
    ) -> Result<OuterLoop, ControlError> {
        let c = &self.cfg;
        let reference = c.trajectory.sample(t);
        let errors = TranslationalErrors {
            e_x: x - reference.x_d,
            e_v: v - reference.v_d,
        };
        let (f_hat, f_d) = commanded_thrust_vector(&errors, &reference.a_d, c.m, c.g, &c.position);
        let q_d = commanded_reduced_attitude(&f_hat)?;
        let f = collective_thrust(&f_hat, r);
        let f_hat_dot = f_hat_rate(&errors, &reference.a_d, &reference.j_d, f, r, c.m, c.g, &c.position);
        let q_d_rate = qd_rate(&f_hat, &f_hat_dot)?;
        let omega_d = desired_omega(r, &q_d, &q_d_rate, c.attitude.k_q, c.error_fn)?;
        Ok(OuterLoop {
            reference,
            errors,
            thrust: ThrustCommand {
                f_hat,
                f_d,
                q_d,
                q_d_rate,
                f,
            },
            sat_args: saturation_args(&errors, c.m, &c.position),
            omega_d,
        })
    }

    /// Rate-command derivative along the model flow from `state`.
    fn omega_d_rate_model(
        &self,
        t: f64,
        state: &RigidBodyState,
        f: f64,
        h: f64,
    ) -> Result<Vec2, ControlError> {
        let c = &self.cfg;
        let v_dot = -Vec3::z() * c.g + state.r.axis(2) * (f / c.m);
        let ahead = self.outer_loop(
            t + h,
            &(state.x + state.v * h),
            &(state.v + v_dot * h),
            &state.r.right_increment(&(state.omega * h)),
        )?;
        let behind = self.outer_loop(
            t - h,
            &(state.x - state.v * h),
            &(state.v - v_dot * h),
            &state.r.right_increment(&(-state.omega * h)),
        )?;
        Ok((ahead.omega_d - behind.omega_d) / (2.0 * h))
    }

    /// One control tick.
    pub fn update(
        &mut self,
        t: f64,
        state: &RigidBodyState,
        rotor: &RotorParams,
    ) -> Result<ControlOutput, ControlError> {
        let outer = self.outer_loop(t, &state.x, &state.v, &state.r)?;
        let omega_d_rate = match self.cfg.omega_rate {
            OmegaRateSource::Filtered { .. } => self.estimator.update(outer.omega_d),
            OmegaRateSource::ModelFlow { step } => {
                self.omega_d_rate_model(t, state, outer.thrust.f, step)?
            }
        };
        let command = AttitudeCommand {
            q_d: outer.thrust.q_d,
            q_d_rate: outer.thrust.q_d_rate,
            omega_d: outer.omega_d,
            omega_d_rate,
        };
        let c = &self.cfg;
        let (torque, attitude_errors) = attitude_torque(
            &state.r,
            &state.omega,
            &command,
            &c.attitude,
            &c.j_nominal,
            c.error_fn,
        )?;
        let (m1, m2) = torque.moments(&c.j_nominal);
        let allocation = allocate(outer.thrust.f, m1, m2, rotor);
        let v1 = lyapunov_v1(c.attitude.alpha, attitude_errors.psi, &attitude_errors.e_omega);
        Ok(ControlOutput {
            t,
            outer,
            command,
            attitude_errors,
            torque,
            allocation,
            v1,
        })
    }
}
