//! Reference trajectories with closed-form derivatives up to jerk.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::position::feedforward_force;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub x_d: Vec3,
    pub v_d: Vec3,
    pub a_d: Vec3,
    pub j_d: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EightShape {
    /// `A [sin wt, cos wt, h/A]`, a horizontal circle.
    #[default]
    Circle,
    /// `A [sin wt, sin(2wt)/2, h/A]`, a lemniscate-like eight.
    Lemniscate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Hover {
        point: Vec3,
    },
    FigureEight {
        amplitude: f64,
        rate: f64,
        altitude: f64,
        #[serde(default)]
        shape: EightShape,
    },
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::FigureEight {
            amplitude: 2.0,
            rate: 2.0,
            altitude: 10.0,
            shape: EightShape::Circle,
        }
    }
}

impl Trajectory {
    pub fn sample(&self, t: f64) -> TrajectorySample {
        match *self {
            Trajectory::Hover { point } => hover(point),
            Trajectory::FigureEight {
                amplitude,
                rate,
                altitude,
                shape,
            } => match shape {
                EightShape::Circle => figure_eight(t, amplitude, rate, altitude),
                EightShape::Lemniscate => lemniscate(t, amplitude, rate, altitude),
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Trajectory::Hover { point } => {
                if point.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err("hover point must be finite".into())
                }
            }
            Trajectory::FigureEight {
                amplitude,
                rate,
                altitude,
                ..
            } => {
                if [amplitude, rate, altitude].iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err("figure-eight parameters must be finite".into())
                }
            }
        }
    }
}

/// Position held constant.
pub fn hover(point: Vec3) -> TrajectorySample {
    TrajectorySample {
        x_d: point,
        ..Default::default()
    }
}

pub fn figure_eight(t: f64, amplitude: f64, rate: f64, altitude: f64) -> TrajectorySample {
    let (s, c) = (rate * t).sin_cos();
    let a = amplitude;
    let w = rate;
    TrajectorySample {
        x_d: Vec3::new(a * s, a * c, altitude),
        v_d: Vec3::new(a * w * c, -a * w * s, 0.0),
        a_d: Vec3::new(-a * w * w * s, -a * w * w * c, 0.0),
        j_d: Vec3::new(-a * w * w * w * c, a * w * w * w * s, 0.0),
    }
}

pub fn lemniscate(t: f64, amplitude: f64, rate: f64, altitude: f64) -> TrajectorySample {
    let (s1, c1) = (rate * t).sin_cos();
    let (s2, c2) = (2.0 * rate * t).sin_cos();
    let a = amplitude;
    let w = rate;
    let w2 = w * w;
    TrajectorySample {
        x_d: Vec3::new(a * s1, 0.5 * a * s2, altitude),
        v_d: Vec3::new(a * w * c1, a * w * c2, 0.0),
        a_d: Vec3::new(-a * w2 * s1, -2.0 * a * w2 * s2, 0.0),
        j_d: Vec3::new(-a * w2 * w * c1, -4.0 * a * w2 * w * c2, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B2Check {
    pub feasible: bool,
    /// Smallest sampled `|f_d|_inf` (N).
    pub inf_norm: f64,
}

fn grid(horizon: f64) -> impl Iterator<Item = f64> {
    let n = (horizon / 1e-3).round() as usize;
    (0..=n).map(|k| k as f64 * 1e-3)
}

/// Whether the outer saturation bound stays below the feedforward force on a
/// 1 ms grid over `[0, horizon]`.
pub fn validate_b2(traj: &Trajectory, horizon: f64, m: f64, g: f64, b2: f64) -> B2Check {
    let inf_norm = grid(horizon)
        .map(|t| feedforward_force(&traj.sample(t).a_d, m, g).amax())
        .fold(f64::INFINITY, f64::min);
    B2Check {
        feasible: b2 < inf_norm,
        inf_norm,
    }
}

/// Largest Euclidean feedforward force over the same grid (N).
pub fn sup_feedforward_norm(traj: &Trajectory, horizon: f64, m: f64, g: f64) -> f64 {
    grid(horizon)
        .map(|t| feedforward_force(&traj.sample(t).a_d, m, g).norm())
        .fold(0.0, f64::max)
}
