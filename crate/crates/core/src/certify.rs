//! Pre-flight check of the sufficient gain conditions for closed-loop
//! tracking. Everything here is a pure report; nothing is enforced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{basin_check, AttitudeCommand, AttitudeGains, BasinCheck};
use crate::geometry::{ErrorFunction, GeometryError, Vec2};
use crate::plant::RigidBodyState;
use crate::position::PositionGains;
use crate::reference::{sup_feedforward_norm, validate_b2, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("no real k2 exists for these (k_x, k_v): k_v² = {kv2} < 4 k_x = {four_kx}")]
    NoRealK2 { kv2: f64, four_kx: f64 },
}

/// Symmetric or general 2×2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Both roots of `k2² - k_v k2 + k_x = 0`, smaller first.
pub fn derive_k2(k_x: f64, k_v: f64) -> Result<(f64, f64), CertifyError> {
    let disc = k_v * k_v - 4.0 * k_x;
    if disc < 0.0 {
        return Err(CertifyError::NoRealK2 {
            kv2: k_v * k_v,
            four_kx: 4.0 * k_x,
        });
    }
    let s = disc.sqrt();
    // Product of roots is k_x; avoids cancellation in the smaller root.
    let big = (k_v + s) / 2.0;
    let small = if big > 0.0 { k_x / big } else { (k_v - s) / 2.0 };
    Ok((small, big))
}

/// Largest admissible weight `c` on the cross term of the translational
/// Lyapunov function, for tilt bounded by `theta0`.
pub fn c_bound(k_x: f64, k_v: f64, m: f64, theta0: f64) -> f64 {
    let s = theta0.sin();
    let lo = 1.0 - s;
    let hi = 1.0 + s;
    let first = k_x * k_v * lo * lo / (k_x * lo + k_v * k_v * hi * hi / (4.0 * m));
    first.min(k_v * lo).min((k_x / m).sqrt())
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub fn lambda_min_sym(w: &Mat2) -> f64 {
    let mean = 0.5 * (w[0][0] + w[1][1]);
    let half_diff = 0.5 * (w[0][0] - w[1][1]);
    mean - half_diff.hypot(w[0][1])
}

/// Largest singular value of a 2×2 matrix.
pub fn spectral_norm(w: &Mat2) -> f64 {
    let [[a, b], [c, d]] = *w;
    let fro2 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
    ((fro2 + disc.sqrt()) / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateChecks {
    pub c_positive: bool,
    pub c_below_max: bool,
    pub inner_bound_below_half_outer: bool,
    pub outer_bound_feasible: bool,
    pub w1_positive_definite: bool,
    pub spectral_condition: bool,
}

impl CertificateChecks {
    pub fn all(&self) -> bool {
        self.c_positive
            && self.c_below_max
            && self.inner_bound_below_half_outer
            && self.outer_bound_feasible
            && self.w1_positive_definite
            && self.spectral_condition
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub k_x: f64,
    pub k_v: f64,
    pub k1: f64,
    /// `None` when `k_v² < 4 k_x`.
    pub k2_roots: Option<(f64, f64)>,
    pub theta0: f64,
    pub c: f64,
    pub c_max: f64,
    pub fd_sup: f64,
    pub fd_inf_norm: f64,
    pub w1: Mat2,
    pub w2: Mat2,
    pub w3: Mat2,
    pub lambda_min_w1: f64,
    pub w2_norm: f64,
    pub condition_lhs: f64,
    pub condition_rhs: f64,
    pub beta: f64,
    pub passes: CertificateChecks,
    /// Human-readable reasons for each failed check.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyInputs<'a> {
    pub position: &'a PositionGains,
    pub attitude: &'a AttitudeGains,
    pub m: f64,
    pub g: f64,
    pub trajectory: &'a Trajectory,
    pub horizon: f64,
    pub theta0: f64,
    pub c: f64,
}

pub fn build_certificate(inp: &CertifyInputs) -> GainCertificate {
    let k_x = inp.position.k_x();
    let k_v = inp.position.k_v();
    let m = inp.m;
    let s = inp.theta0.sin();
    let c = inp.c;
    let c_max = c_bound(k_x, k_v, m, inp.theta0);
    let fd_sup = sup_feedforward_norm(inp.trajectory, inp.horizon, m, inp.g);
    let b2 = validate_b2(inp.trajectory, inp.horizon, m, inp.g, inp.position.sigma2.b());
    let a1 = inp.position.sigma1.a();

    let off = -c * k_v * (1.0 + s) / (2.0 * m);
    let w1 = [
        [c * k_x * (1.0 - s) / m, off],
        [off, k_v * (1.0 - s) - c],
    ];
    let w2 = [[2.0 * c / m * fd_sup, 0.0], [2.0 * (a1 + fd_sup), 0.0]];
    let w3 = [
        [inp.attitude.alpha * inp.attitude.k_q, 0.0],
        [0.0, inp.attitude.k_omega],
    ];
    let lambda_min_w1 = lambda_min_sym(&w1);
    let w2_norm = spectral_norm(&w2);
    let condition_lhs = w3[0][0].min(w3[1][1]);
    let condition_rhs = if lambda_min_w1 > 0.0 {
        4.0 * w2_norm * w2_norm / lambda_min_w1
    } else {
        f64::INFINITY
    };

    let passes = CertificateChecks {
        c_positive: c > 0.0,
        c_below_max: c < c_max,
        inner_bound_below_half_outer: inp.position.sigma1.b() < inp.position.sigma2.a() / 2.0,
        outer_bound_feasible: b2.feasible,
        w1_positive_definite: lambda_min_w1 > 0.0,
        spectral_condition: condition_lhs > condition_rhs,
    };

    let mut notes = Vec::new();
    if !passes.c_positive {
        notes.push("c must be positive".to_string());
    }
    if !passes.c_below_max {
        notes.push(format!("c = {c} is not below c_max = {c_max:.6}"));
    }
    if !passes.inner_bound_below_half_outer {
        notes.push("inner saturation bound b1 must be below a2 / 2".to_string());
    }
    if !passes.outer_bound_feasible {
        notes.push(format!(
            "outer bound b2 = {} is not below inf |f_d|_inf = {:.4}",
            inp.position.sigma2.b(),
            b2.inf_norm
        ));
    }
    if !passes.w1_positive_definite {
        notes.push(format!("W1 is not positive definite (lambda_min = {lambda_min_w1:.4e})"));
    }
    if !passes.spectral_condition {
        notes.push(format!(
            "conservative condition not met: min(alpha k_q, k_omega) = {condition_lhs:.4} <= {condition_rhs:.4e}"
        ));
    }

    GainCertificate {
        k_x,
        k_v,
        k1: inp.position.k1,
        k2_roots: derive_k2(k_x, k_v).ok(),
        theta0: inp.theta0,
        c,
        c_max,
        fd_sup,
        fd_inf_norm: b2.inf_norm,
        w1,
        w2,
        w3,
        lambda_min_w1,
        w2_norm,
        condition_lhs,
        condition_rhs,
        beta: (inp.attitude.k_q / 2.0).min(inp.attitude.k_omega),
        passes,
        notes,
    }
}

/// Basin test at the initial state against the initial command.
pub fn check_initial_condition(
    state0: &RigidBodyState,
    cmd0: &AttitudeCommand,
    alpha: f64,
    error_fn: ErrorFunction,
) -> BasinCheck {
    let q = state0.r.reduced_attitude();
    let psi0 = error_fn.psi(&q, &cmd0.q_d);
    let e_omega = Vec2::new(state0.omega.x, state0.omega.y) - cmd0.omega_d;
    basin_check(&e_omega, psi0, alpha)
}

/// Same as [`check_initial_condition`] but refuses the antipodal start.
pub fn check_initial_condition_strict(
    state0: &RigidBodyState,
    cmd0: &AttitudeCommand,
    alpha: f64,
    error_fn: ErrorFunction,
) -> Result<BasinCheck, GeometryError> {
    error_fn.d1(&state0.r.reduced_attitude(), &cmd0.q_d)?;
    Ok(check_initial_condition(state0, cmd0, alpha, error_fn))
}
