//! Map a (thrust, roll torque, pitch torque) demand to three rotors.
//!
//! The X layout makes the map from rotor thrusts to `(f, M1, M2)` square, so
//! the inverse is unique. Actuator limits are applied afterwards and the wrench
//! the body actually feels is recomputed from the clamped rotors.

use serde::{Deserialize, Serialize};

use crate::plant::{rotor_set_from_pitch, wrench_from_rotors, RotorParams, RotorSet, Wrench};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub rotors: RotorSet,
    pub saturated: [bool; 3],
    pub realized_wrench: Wrench,
}

impl AllocationResult {
    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }
}

/// Unclamped per-rotor thrusts for the demanded collective thrust and torques.
pub fn solve_thrusts(f: f64, m1: f64, m2: f64, arm: f64) -> [f64; 3] {
    let t1 = (f + m1 / arm) / 2.0;
    let t2 = (m2 - m1) / (2.0 * arm);
    [t1, t2, f - t1 - t2]
}

/// Blade pitches realizing the given thrusts at the fixed rotor speeds.
pub fn pitch_commands(thrust: [f64; 3], rotor: &RotorParams) -> [f64; 3] {
    let mut gamma = [0.0; 3];
    for i in 0..3 {
        let w = rotor.omega_rotor[i];
        gamma[i] = thrust[i] / (rotor.b_l * w * w);
    }
    gamma
}

/// Clamp to the actuator range and rebuild the rotor set and wrench.
pub fn clamp_thrusts(thrust: [f64; 3], rotor: &RotorParams) -> AllocationResult {
    let mut clamped = thrust;
    let mut saturated = [false; 3];
    for i in 0..3 {
        clamped[i] = thrust[i].clamp(rotor.thrust_min, rotor.thrust_max);
        saturated[i] = clamped[i] != thrust[i];
    }
    let mut rotors = rotor_set_from_pitch(pitch_commands(clamped, rotor), rotor);
    // Keep the thrusts bit-exact; the pitch round trip may differ in the last ulp.
    rotors.thrust = clamped;
    AllocationResult {
        rotors,
        saturated,
        realized_wrench: wrench_from_rotors(&rotors, rotor.arm),
    }
}

/// Full allocation: invert, clamp, convert to pitch.
pub fn allocate(f: f64, m1: f64, m2: f64, rotor: &RotorParams) -> AllocationResult {
    clamp_thrusts(solve_thrusts(f, m1, m2, rotor.arm), rotor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::RotorMode;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solve_examples() {
        assert_eq!(solve_thrusts(0.0, 0.0, 0.0, 0.17), [0.0; 3]);
        let t = solve_thrusts(9.81, 0.0, 0.0, 0.2);
        assert_abs_diff_eq!(t[0], 4.905, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[2], 4.905, epsilon = 1e-12);
        let t = solve_thrusts(6.0, -0.8, 0.0, 0.2);
        assert_abs_diff_eq!(t[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_through_forward_map() {
        let rotor = RotorParams {
            thrust_min: -1e9,
            thrust_max: 1e9,
            ..RotorParams::variable_pitch()
        };
        let res = allocate(7.3, 0.21, -0.4, &rotor);
        assert_abs_diff_eq!(res.realized_wrench.f, 7.3, epsilon = 1e-12);
        assert_abs_diff_eq!(res.realized_wrench.m.x, 0.21, epsilon = 1e-12);
        assert_abs_diff_eq!(res.realized_wrench.m.y, -0.4, epsilon = 1e-12);
        assert!(!res.any_saturated());
    }

    #[test]
    fn clamp_examples() {
        let conv = RotorParams::conventional();
        let inside = clamp_thrusts([1.0, 2.0, 3.0], &conv);
        assert_eq!(inside.rotors.thrust, [1.0, 2.0, 3.0]);
        assert_eq!(inside.saturated, [false; 3]);

        let low = clamp_thrusts([-1.0, 2.0, 3.0], &conv);
        assert_eq!(low.rotors.thrust, [0.05, 2.0, 3.0]);
        assert_eq!(low.saturated, [true, false, false]);
        assert_eq!(low.realized_wrench, wrench_from_rotors(&low.rotors, conv.arm));

        let vp = RotorParams {
            thrust_min: -5.0,
            mode: RotorMode::VariablePitch,
            ..RotorParams::variable_pitch()
        };
        let res = clamp_thrusts([-1.0, 2.0, 3.0], &vp);
        assert_eq!(res.rotors.thrust, [-1.0, 2.0, 3.0]);
        assert!(!res.any_saturated());
    }

    #[test]
    fn clamp_is_idempotent() {
        let conv = RotorParams::conventional();
        let once = clamp_thrusts([-4.0, 50.0, 7.0], &conv);
        let twice = clamp_thrusts(once.rotors.thrust, &conv);
        assert_eq!(once.rotors, twice.rotors);
        assert_eq!(twice.saturated, [false; 3]);
    }

    #[test]
    fn pitch_examples() {
        let rotor = RotorParams::variable_pitch();
        assert_eq!(pitch_commands([0.0; 3], &rotor), [0.0; 3]);
        let g = pitch_commands([1.152; 3], &rotor);
        for gi in g {
            assert_abs_diff_eq!(gi, 1.0, epsilon = 1e-12);
        }
        let t = [0.4, -2.0, 9.0];
        let back = rotor_set_from_pitch(pitch_commands(t, &rotor), &rotor);
        for (got, want) in back.thrust.iter().zip(t) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn drag_follows_pitch() {
        let rotor = RotorParams::variable_pitch();
        let res = allocate(9.81, 0.0, 0.0, &rotor);
        let expected = rotor_set_from_pitch(res.rotors.pitch, &rotor);
        assert_eq!(res.rotors.drag, expected.drag);
        assert_eq!(res.realized_wrench.m.z, expected.drag[0] - expected.drag[1] + expected.drag[2]);
    }
}
