//! Reduced-attitude tracking with two torque inputs.
//!
//! Only the thrust axis `q = R e3` is regulated. The body rates about the two
//! horizontal axes steer `q` through
//!
//! ```text
//! q' = R (omega x e3) = omega_2 r1 - omega_1 r2,      r_i = R e_i
//! ```
//!
//! so the horizontal rates enter through the map `B = [-r2, r1]`. The virtual
//! rate command `omega_d = B^T w` realizes `q' = w` exactly, with
//! `w = T(q, q_d) q_d' - k_q d1psi`. The torque law then drives
//! `e_omega = omega~ - omega_d` to zero with a backstepping term, an inertia
//! coupling cancellation and a bounded robustifying term.
//! Yaw rate is left unregulated.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    transport, ErrorFunction, GeometryError, RotationMatrix, TangentVector, UnitVector3, Vec2,
    Vec3,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttitudeGains {
    pub k_q: f64,
    pub k_omega: f64,
    pub alpha: f64,
    /// Bound on the gyroscopic and drag uncertainty.
    pub delta: f64,
    /// Width of the linear zone of the robustifying term.
    pub tol: f64,
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self {
            k_q: 8.0,
            k_omega: 10.0,
            alpha: 10.0,
            delta: 3e-3,
            tol: 1e-3,
        }
    }
}

impl AttitudeGains {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("k_q", self.k_q),
            ("k_omega", self.k_omega),
            ("alpha", self.alpha),
            ("tol", self.tol),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(format!("delta must be non-negative, got {}", self.delta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    pub q_d: UnitVector3,
    pub q_d_rate: TangentVector,
    pub omega_d: Vec2,
    pub omega_d_rate: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeErrors {
    pub psi: f64,
    pub e_q: TangentVector,
    pub e_omega: Vec2,
    /// Angle between `q` and `q_d` (rad).
    pub tilt: f64,
}

/// Torque command in nominal-inertia units: `[M1 / J1, M2 / J2]` (rad/s²).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TorqueCommand {
    pub u: Vec2,
}

impl TorqueCommand {
    /// Body torques `(M1, M2)` for the nominal inertia.
    pub fn moments(&self, j_nominal: &Vec3) -> (f64, f64) {
        (j_nominal.x * self.u.x, j_nominal.y * self.u.y)
    }
}

/// `B^T v` with `B = [-r2, r1]`: the horizontal body rates whose induced
/// thrust-axis motion best matches `v`.
pub fn rate_map_transpose(r: &RotationMatrix, v: &Vec3) -> Vec2 {
    Vec2::new(-r.axis(1).dot(v), r.axis(0).dot(v))
}

/// Thrust-axis velocity produced by body rates: `R (omega x e3)`.
pub fn reduced_attitude_rate(r: &RotationMatrix, omega: &Vec3) -> Vec3 {
    r.axis(0) * omega.y - r.axis(1) * omega.x
}

/// Backstepping rate command.
pub fn desired_omega(
    r: &RotationMatrix,
    q_d: &UnitVector3,
    q_d_rate: &TangentVector,
    k_q: f64,
    error_fn: ErrorFunction,
) -> Result<Vec2, GeometryError> {
    let q = r.reduced_attitude();
    let e_q = error_fn.d1(&q, q_d)?;
    let carried = transport(&q, q_d, q_d_rate)?;
    let w = carried.value() - e_q.value() * k_q;
    Ok(rate_map_transpose(r, &w))
}

/// Unit-bounded robustifying direction: saturated normalization of `e_omega`.
pub fn u_delta(e_omega: &Vec2, tol: f64) -> Vec2 {
    let n = e_omega.norm();
    if n > tol {
        e_omega / n
    } else {
        e_omega / tol
    }
}

/// Inertia coupling of the horizontal rates, with nominal inertia.
pub fn f_j(omega: &Vec3, j_nominal: &Vec3) -> Vec2 {
    let (j1, j2, j3) = (j_nominal.x, j_nominal.y, j_nominal.z);
    Vec2::new(
        (j2 - j3) / j1 * omega.y * omega.z,
        (j3 - j1) / j2 * omega.x * omega.z,
    )
}

/// Errors tracked by the attitude loop at the current state.
pub fn attitude_errors(
    r: &RotationMatrix,
    omega: &Vec3,
    cmd: &AttitudeCommand,
    error_fn: ErrorFunction,
) -> Result<AttitudeErrors, GeometryError> {
    let q = r.reduced_attitude();
    let e_q = error_fn.d1(&q, &cmd.q_d)?;
    Ok(AttitudeErrors {
        psi: error_fn.psi(&q, &cmd.q_d),
        e_q,
        e_omega: Vec2::new(omega.x, omega.y) - cmd.omega_d,
        tilt: q.angle_to(&cmd.q_d),
    })
}

/// The torque law. Returns the command together with the errors it acted on.
pub fn attitude_torque(
    r: &RotationMatrix,
    omega: &Vec3,
    cmd: &AttitudeCommand,
    gains: &AttitudeGains,
    j_nominal: &Vec3,
    error_fn: ErrorFunction,
) -> Result<(TorqueCommand, AttitudeErrors), GeometryError> {
    let errs = attitude_errors(r, omega, cmd, error_fn)?;
    let horizontal = Vec2::new(omega.x, omega.y);
    let h = horizontal.norm();
    let u = -rate_map_transpose(r, errs.e_q.value()) * gains.alpha
        - errs.e_omega * gains.k_omega
        - f_j(omega, j_nominal)
        + cmd.omega_d_rate
        - u_delta(&errs.e_omega, gains.tol) * ((h + h * h) * gains.delta);
    Ok((TorqueCommand { u }, errs))
}

/// `V1 = alpha psi + 0.5 |e_omega|²`.
pub fn lyapunov_v1(alpha: f64, psi: f64, e_omega: &Vec2) -> f64 {
    alpha * psi + 0.5 * e_omega.norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinCheck {
    pub inside: bool,
    /// `2 alpha (2 - psi0) - |e_omega0|`; positive inside.
    pub margin: f64,
}

/// Initial-condition test `|e_omega(0)| < 2 alpha (2 - psi(0))`.
pub fn basin_check(e_omega0: &Vec2, psi0: f64, alpha: f64) -> BasinCheck {
    let bound = 2.0 * alpha * (2.0 - psi0);
    let n = e_omega0.norm();
    BasinCheck {
        inside: n < bound,
        margin: bound - n,
    }
}

/// Backward-difference estimate of the rate-command derivative, smoothed by
/// a single-pole low-pass filter with unity DC gain.
#[derive(Debug, Clone)]
pub struct OmegaRateEstimator {
    dt: f64,
    /// Filter blend factor in (0, 1]; 1 disables smoothing.
    blend: f64,
    prev: Option<Vec2>,
    state: Option<Vec2>,
}

impl OmegaRateEstimator {
    /// `cutoff` in rad/s; `f64::INFINITY` gives the raw difference.
    pub fn new(dt: f64, cutoff: f64) -> Self {
        let blend = if cutoff.is_infinite() {
            1.0
        } else {
            1.0 - (-cutoff * dt).exp()
        };
        Self {
            dt,
            blend,
            prev: None,
            state: None,
        }
    }

    /// Feed the newest sample and return the current estimate.
    pub fn update(&mut self, sample: Vec2) -> Vec2 {
        let out = match self.prev {
            None => Vec2::zeros(),
            Some(prev) => {
                let raw = (sample - prev) / self.dt;
                let next = match self.state {
                    None => raw,
                    Some(y) => y + (raw - y) * self.blend,
                };
                self.state = Some(next);
                next
            }
        };
        self.prev = Some(sample);
        out
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.state = None;
    }
}
