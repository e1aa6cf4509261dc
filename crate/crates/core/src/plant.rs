//! Nonlinear quadrotor plant with the fourth rotor disabled.
//!
//! Rotor speeds are constant; thrust is set by collective blade pitch. The
//! plant always uses the true inertia, drag and rotor inertia, which differ
//! from the nominal diagonal inertia the controller is designed with.

use serde::{Deserialize, Serialize};

use crate::geometry::{hat, Mat3, RotationMatrix, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    /// Position (m).
    pub x: Vec3,
    /// Velocity (m/s).
    pub v: Vec3,
    pub r: RotationMatrix,
    /// Body angular velocity (rad/s).
    pub omega: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(x: Vec3) -> Self {
        Self {
            x,
            v: Vec3::zeros(),
            r: RotationMatrix::identity(),
            omega: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|c| c.is_finite())
            && self.v.iter().all(|c| c.is_finite())
            && self.omega.iter().all(|c| c.is_finite())
            && self.r.matrix().iter().all(|c| c.is_finite())
    }
}

/// Time derivative of a [`RigidBodyState`]; `r_dot` is the body rate that
/// drives `R' = R hat(omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub x_dot: Vec3,
    pub v_dot: Vec3,
    pub body_rate: Vec3,
    pub omega_dot: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InertialParams {
    /// Mass (kg).
    pub m: f64,
    /// True inertia used by the plant (kg m²).
    #[serde(with = "crate::geometry::mat3_rows")]
    pub j: Mat3,
    /// Diagonal inertia the controller is designed with.
    pub j_nominal: Vec3,
    /// Rotor inertia (kg m²).
    pub j_r: f64,
    /// Rotational drag matrix.
    #[serde(with = "crate::geometry::mat3_rows")]
    pub k_d: Mat3,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Default for InertialParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            j: Mat3::new(
                0.0972, 0.0194, 0.0195, //
                0.0194, 0.0974, 0.0317, //
                0.0195, 0.0317, 0.1584,
            ),
            j_nominal: Vec3::new(0.081, 0.0812, 0.1320),
            j_r: 5e-5,
            k_d: Mat3::from_diagonal(&Vec3::new(0.7e-4, 0.7e-4, 1.4e-4)),
            g: default_gravity(),
        }
    }
}

impl InertialParams {
    /// Plant identical to the controller's model: `J = J_nominal`, no rotor
    /// inertia and no drag.
    pub fn exact_model(&self) -> Self {
        Self {
            j: Mat3::from_diagonal(&self.j_nominal),
            j_r: 0.0,
            k_d: Mat3::zeros(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.m > 0.0) {
            return Err(format!("mass must be positive, got {}", self.m));
        }
        if (self.j - self.j.transpose()).norm() > 1e-12 {
            return Err("inertia must be symmetric".into());
        }
        if self.j.cholesky().is_none() {
            return Err("inertia must be positive definite".into());
        }
        if self.j_nominal.iter().any(|&c| !(c > 0.0)) {
            return Err("nominal inertia must be positive".into());
        }
        if !(self.j_r >= 0.0) {
            return Err("rotor inertia must be non-negative".into());
        }
        // The exact model zeroes K_d on purpose.
        if self.k_d != Mat3::zeros() {
            let sym = (self.k_d + self.k_d.transpose()) * 0.5;
            if sym.cholesky().is_none() {
                return Err("drag matrix must be positive definite".into());
            }
        }
        if !(self.g > 0.0) {
            return Err("gravity must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotorMode {
    /// Blade pitch can reverse; thrust may be negative.
    VariablePitch,
    /// Thrust strictly positive.
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotorParams {
    /// Moment arm d (m).
    pub arm: f64,
    /// Constant rotor speeds (rad/s).
    pub omega_rotor: [f64; 3],
    pub b_l: f64,
    pub b_d1: f64,
    pub b_d2: f64,
    pub b_d3: f64,
    /// Per-rotor thrust bounds (N).
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub mode: RotorMode,
}

impl Default for RotorParams {
    fn default() -> Self {
        Self::variable_pitch()
    }
}

impl RotorParams {
    pub fn variable_pitch() -> Self {
        Self {
            arm: 0.17,
            omega_rotor: [600.0; 3],
            b_l: 3.2e-6,
            b_d1: 1.1e-9,
            b_d2: 1.3e-9,
            b_d3: 6.0e-8,
            thrust_min: -30.0,
            thrust_max: 30.0,
            mode: RotorMode::VariablePitch,
        }
    }

    pub fn conventional() -> Self {
        Self {
            thrust_min: 0.05,
            mode: RotorMode::Conventional,
            ..Self::variable_pitch()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.arm > 0.0) {
            return Err(format!("arm must be positive, got {}", self.arm));
        }
        if self.omega_rotor.iter().any(|&w| !(w > 0.0)) {
            return Err("rotor speeds must be positive".into());
        }
        if !(self.b_l > 0.0) {
            return Err("lift coefficient must be positive".into());
        }
        if !(self.thrust_min < self.thrust_max) {
            return Err("thrust_min must be below thrust_max".into());
        }
        if self.mode == RotorMode::Conventional && self.thrust_min < 0.0 {
            return Err("conventional rotors need thrust_min >= 0".into());
        }
        Ok(())
    }
}

/// Per-rotor thrust (N), blade pitch (rad) and drag torque (N m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotorSet {
    pub thrust: [f64; 3],
    pub pitch: [f64; 3],
    pub drag: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    /// Collective thrust along body z (N).
    pub f: f64,
    /// Body torque (N m).
    pub m: Vec3,
}

/// Torque from the spinning rotors' angular momentum. The first two rotors
/// spin clockwise, the third anti-clockwise.
pub fn gyroscopic_moment(omega: &Vec3, rotor: &RotorParams, j_r: f64) -> Vec3 {
    let [w1, w2, w3] = rotor.omega_rotor;
    omega.cross(&Vec3::z()) * (j_r * (w1 - w2 + w3))
}

/// Quadratic rotational drag `|omega| K_d omega`.
pub fn drag_torque(omega: &Vec3, k_d: &Mat3) -> Vec3 {
    k_d * omega * omega.norm()
}

/// Thrust and drag torque of one rotor at blade pitch `gamma`.
pub fn rotor_thrust_and_drag(gamma: f64, omega: f64, rotor: &RotorParams) -> (f64, f64) {
    let w2 = omega * omega;
    let thrust = rotor.b_l * w2 * gamma;
    let drag = rotor.b_d1 * w2 + rotor.b_d2 * w2 * gamma * gamma + rotor.b_d3 * omega * gamma;
    (thrust, drag)
}

/// Fill in thrusts and drag torques from blade pitches.
pub fn rotor_set_from_pitch(pitch: [f64; 3], rotor: &RotorParams) -> RotorSet {
    let mut set = RotorSet {
        pitch,
        ..RotorSet::default()
    };
    for (i, &gamma) in pitch.iter().enumerate() {
        let (t, d) = rotor_thrust_and_drag(gamma, rotor.omega_rotor[i], rotor);
        set.thrust[i] = t;
        set.drag[i] = d;
    }
    set
}

/// Net thrust and torque from three rotors in the X layout.
pub fn wrench_from_rotors(rotors: &RotorSet, arm: f64) -> Wrench {
    let [t1, t2, t3] = rotors.thrust;
    let [d1, d2, d3] = rotors.drag;
    Wrench {
        f: t1 + t2 + t3,
        m: Vec3::new(arm * (t1 - t2 - t3), arm * (t1 + t2 - t3), d1 - d2 + d3),
    }
}

/// Rigid-body equations of motion under a constant wrench.
pub fn state_derivative(
    s: &RigidBodyState,
    w: &Wrench,
    p: &InertialParams,
    rotor: &RotorParams,
) -> StateDerivative {
    let e3 = Vec3::z();
    let thrust_axis = s.r.matrix() * e3;
    let v_dot = -e3 * p.g + thrust_axis * (w.f / p.m);
    let j_omega = p.j * s.omega;
    let rhs = j_omega.cross(&s.omega) + gyroscopic_moment(&s.omega, rotor, p.j_r)
        - drag_torque(&s.omega, &p.k_d)
        + w.m;
    let omega_dot = p
        .j
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| Vec3::repeat(f64::NAN));
    StateDerivative {
        x_dot: s.v,
        v_dot,
        body_rate: s.omega,
        omega_dot,
    }
}

/// `R hat(omega)`, the attitude rate as a matrix.
pub fn rotation_rate(r: &RotationMatrix, omega: &Vec3) -> Mat3 {
    r.matrix() * hat(omega)
}

/// Rotational kinetic energy `0.5 omega^T J omega`.
pub fn kinetic_energy(omega: &Vec3, j: &Mat3) -> f64 {
    0.5 * omega.dot(&(j * omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gyroscopic_examples() {
        let rotor = RotorParams::variable_pitch();
        assert_eq!(gyroscopic_moment(&Vec3::zeros(), &rotor, 5e-5), Vec3::zeros());
        let g = gyroscopic_moment(&Vec3::x(), &rotor, 5e-5);
        assert_abs_diff_eq!(g, Vec3::new(0.0, -0.03, 0.0), epsilon = 1e-15);
        assert_eq!(gyroscopic_moment(&Vec3::new(0.0, 0.0, 5.0), &rotor, 5e-5), Vec3::zeros());
    }

    #[test]
    fn drag_examples() {
        let kd = InertialParams::default().k_d;
        assert_eq!(drag_torque(&Vec3::zeros(), &kd), Vec3::zeros());
        let d = drag_torque(&Vec3::new(0.0, 0.0, 10.0), &kd);
        assert_abs_diff_eq!(d, Vec3::new(0.0, 0.0, 0.014), epsilon = 1e-15);
        let w = Vec3::new(0.3, -2.0, 1.1);
        assert_abs_diff_eq!(drag_torque(&(w * 2.0), &kd), drag_torque(&w, &kd) * 4.0, epsilon = 1e-15);
        assert!(drag_torque(&w, &kd).dot(&w) >= 0.0);
    }

    #[test]
    fn rotor_model_examples() {
        let rotor = RotorParams::variable_pitch();
        let (t, d) = rotor_thrust_and_drag(0.0, 600.0, &rotor);
        assert_eq!(t, 0.0);
        assert_abs_diff_eq!(d, rotor.b_d1 * 360000.0);
        let (t, _) = rotor_thrust_and_drag(1.0, 600.0, &rotor);
        assert_abs_diff_eq!(t, 1.152, epsilon = 1e-12);
        let (t2, _) = rotor_thrust_and_drag(2.0 * 0.37, 600.0, &rotor);
        let (t1, _) = rotor_thrust_and_drag(0.37, 600.0, &rotor);
        assert_abs_diff_eq!(t2, 2.0 * t1, epsilon = 1e-15);
    }

    #[test]
    fn wrench_examples() {
        let zero = wrench_from_rotors(&RotorSet::default(), 0.2);
        assert_eq!(zero, Wrench::default());

        let set = RotorSet {
            thrust: [1.0, 2.0, 3.0],
            ..Default::default()
        };
        let w = wrench_from_rotors(&set, 0.2);
        assert_eq!(w.f, 6.0);
        assert_abs_diff_eq!(w.m.x, -0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(w.m.y, 0.0, epsilon = 1e-15);

        let hover = RotorSet {
            thrust: [4.905, 0.0, 4.905],
            ..Default::default()
        };
        let w = wrench_from_rotors(&hover, 0.2);
        assert_abs_diff_eq!(w.f, 9.81, epsilon = 1e-15);
        assert_eq!(w.m.x, 0.0);
        assert_eq!(w.m.y, 0.0);
    }

    #[test]
    fn hover_and_free_fall() {
        let p = InertialParams::default();
        let rotor = RotorParams::variable_pitch();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 5.0));
        let m = Vec3::new(0.01, -0.02, 0.003);
        let d = state_derivative(&s, &Wrench { f: p.m * p.g, m }, &p, &rotor);
        assert!(d.v_dot.norm() <= 1e-14);
        assert_abs_diff_eq!(d.omega_dot, p.j.try_inverse().unwrap() * m, epsilon = 1e-12);

        let d = state_derivative(&s, &Wrench::default(), &p, &rotor);
        assert_eq!(d.v_dot, Vec3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn euler_coupling_for_diagonal_inertia() {
        let p = InertialParams::default().exact_model();
        let [j1, j2, j3] = [p.j_nominal.x, p.j_nominal.y, p.j_nominal.z];
        let mut s = RigidBodyState::at_rest(Vec3::zeros());
        s.omega = Vec3::new(1.0, 1.0, 1.0);
        let d = state_derivative(&s, &Wrench::default(), &p, &RotorParams::default());
        let expect = Vec3::new((j2 - j3) / j1, (j3 - j1) / j2, (j1 - j2) / j3);
        assert_abs_diff_eq!(d.omega_dot, expect, epsilon = 1e-12);
    }

    #[test]
    fn wrench_is_linear_in_thrust() {
        let a = RotorSet {
            thrust: [0.3, -1.2, 2.2],
            ..Default::default()
        };
        let b = RotorSet {
            thrust: [1.7, 0.4, -0.9],
            ..Default::default()
        };
        let sum = RotorSet {
            thrust: [2.0, -0.8, 1.3],
            ..Default::default()
        };
        let (wa, wb, ws) = (
            wrench_from_rotors(&a, 0.17),
            wrench_from_rotors(&b, 0.17),
            wrench_from_rotors(&sum, 0.17),
        );
        assert_abs_diff_eq!(wa.f + wb.f, ws.f, epsilon = 1e-15);
        assert_abs_diff_eq!(wa.m + wb.m, ws.m, epsilon = 1e-15);
    }

    #[test]
    fn params_validate() {
        assert!(InertialParams::default().validate().is_ok());
        assert!(InertialParams::default().exact_model().validate().is_ok());
        let bad = InertialParams {
            m: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(RotorParams::conventional().validate().is_ok());
        let bad = RotorParams {
            thrust_min: -1.0,
            ..RotorParams::conventional()
        };
        assert!(bad.validate().is_err());
    }
}
