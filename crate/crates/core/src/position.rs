//! Bounded translational control by nested smooth saturations.
//!
//! The feedback `sigma_bar` is added to the feedforward force `f_d`; the sum
//! `f_hat` is the desired thrust vector. Its direction is the reduced-attitude
//! command for the inner loop and its projection on the current thrust axis is
//! the collective thrust.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RotationMatrix, TangentVector, UnitVector3, Vec3};

/// Norm below which the thrust-vector direction is considered undefined (N).
pub const F_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PositionError {
    #[error("thrust command degenerate: |f_hat| = {norm:.3e} N is below the floor {floor} N")]
    DegenerateThrust { norm: f64, floor: f64 },
    #[error("invalid saturation: {0}")]
    InvalidSaturation(String),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
}

/// Shape of the transition between the linear zone and the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Blend {
    /// Quintic with slope profile `(1-t)²(1 + 2t + c t²)`.
    Quintic { c: f64 },
    /// Slope profile `(1-t)^k (1 + k t)`, used for long blends where the
    /// quintic would overshoot the bound.
    Power { k: f64 },
}

impl Blend {
    fn for_ratio(rho: f64) -> Self {
        if rho >= 0.5 {
            Blend::Quintic {
                c: 30.0 * (rho - 0.5),
            }
        } else {
            Blend::Power {
                k: 2.0 / rho - 2.0,
            }
        }
    }

    /// Integral of the slope profile from 0 to `t`.
    fn integral(self, t: f64) -> f64 {
        match self {
            Blend::Quintic { c } => {
                let t2 = t * t;
                let t3 = t2 * t;
                t + (c - 3.0) * t3 / 3.0 + (1.0 - c) * t3 * t / 2.0 + c * t3 * t2 / 5.0
            }
            Blend::Power { k } => {
                let u = 1.0 - t;
                let uk1 = u.powf(k + 1.0);
                2.0 / (k + 2.0) - uk1 + k / (k + 2.0) * uk1 * u
            }
        }
    }

    fn slope(self, t: f64) -> f64 {
        let u = 1.0 - t;
        match self {
            Blend::Quintic { c } => u * u * (1.0 + 2.0 * t + c * t * t),
            Blend::Power { k } => u.powf(k) * (1.0 + k * t),
        }
    }

    fn curvature(self, t: f64) -> f64 {
        match self {
            Blend::Quintic { c } => {
                2.0 * (c - 3.0) * t + 3.0 * (2.0 - 2.0 * c) * t * t + 4.0 * c * t * t * t
            }
            Blend::Power { k } => -k * (k + 1.0) * t * (1.0 - t).powf(k - 1.0),
        }
    }
}

/// Limits of a smooth saturation: identity on `[-a, a]`, pinned at `±b`
/// beyond `±s_b`, C² in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SaturationSpecRaw", into = "SaturationSpecRaw")]
pub struct SaturationSpec {
    a: f64,
    b: f64,
    s_b: f64,
    #[serde(skip)]
    blend: Blend,
}

#[derive(Serialize, Deserialize)]
struct SaturationSpecRaw {
    a: f64,
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_b: Option<f64>,
}

impl TryFrom<SaturationSpecRaw> for SaturationSpec {
    type Error = PositionError;
    fn try_from(raw: SaturationSpecRaw) -> Result<Self, Self::Error> {
        match raw.s_b {
            Some(s_b) => SaturationSpec::with_onset(raw.a, raw.b, s_b),
            None => SaturationSpec::new(raw.a, raw.b),
        }
    }
}

impl From<SaturationSpec> for SaturationSpecRaw {
    fn from(s: SaturationSpec) -> Self {
        SaturationSpecRaw {
            a: s.a,
            b: s.b,
            s_b: Some(s.s_b),
        }
    }
}

impl SaturationSpec {
    /// Blend over `[a, a + 2 (b - a)]`.
    pub fn new(a: f64, b: f64) -> Result<Self, PositionError> {
        Self::with_onset(a, b, a + 2.0 * (b - a))
    }

    pub fn with_onset(a: f64, b: f64, s_b: f64) -> Result<Self, PositionError> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(PositionError::InvalidSaturation(format!("a = {a} must be positive")));
        }
        if !(b > a && b.is_finite()) {
            return Err(PositionError::InvalidSaturation(format!(
                "b = {b} must exceed a = {a} for a smooth transition"
            )));
        }
        // A monotone transition with unit initial slope needs more room than the rise.
        if !(s_b - a > b - a && s_b.is_finite()) {
            return Err(PositionError::InvalidSaturation(format!(
                "s_b = {s_b} must exceed b = {b}"
            )));
        }
        let rho = (b - a) / (s_b - a);
        Ok(Self {
            a,
            b,
            s_b,
            blend: Blend::for_ratio(rho),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn s_b(&self) -> f64 {
        self.s_b
    }

    /// Value and first derivative.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let m = s.abs();
        if m <= self.a {
            return (s, 1.0);
        }
        if m >= self.s_b {
            return (self.b.copysign(s), 0.0);
        }
        let len = self.s_b - self.a;
        let t = (m - self.a) / len;
        let val = self.a + len * self.blend.integral(t);
        (val.copysign(s), self.blend.slope(t))
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.eval(s).1
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        let m = s.abs();
        if m <= self.a || m >= self.s_b {
            return 0.0;
        }
        let len = self.s_b - self.a;
        let c = self.blend.curvature((m - self.a) / len) / len;
        if s < 0.0 {
            -c
        } else {
            c
        }
    }
}

pub fn smooth_sat(s: f64, spec: &SaturationSpec) -> f64 {
    spec.value(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PositionGains {
    pub k1: f64,
    pub k2: f64,
    pub sigma1: SaturationSpec,
    pub sigma2: SaturationSpec,
}

impl Default for PositionGains {
    fn default() -> Self {
        Self {
            k1: 2.0,
            k2: 2.0,
            sigma1: SaturationSpec::new(2.0, 3.5).expect("valid inner limits"),
            sigma2: SaturationSpec::new(8.0, 9.0).expect("valid outer limits"),
        }
    }
}

impl PositionGains {
    pub fn k_x(&self) -> f64 {
        self.k1
    }

    pub fn k_v(&self) -> f64 {
        self.k1 / self.k2 + self.k2
    }

    pub fn validate(&self) -> Result<(), PositionError> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(PositionError::InvalidGains(format!(
                "k1 = {}, k2 = {} must be positive",
                self.k1, self.k2
            )));
        }
        if !(self.sigma1.b < self.sigma2.a / 2.0) {
            return Err(PositionError::InvalidGains(format!(
                "inner bound b1 = {} must be below a2 / 2 = {}",
                self.sigma1.b,
                self.sigma2.a / 2.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TranslationalErrors {
    pub e_x: Vec3,
    pub e_v: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustCommand {
    pub f_hat: Vec3,
    pub f_d: Vec3,
    pub q_d: UnitVector3,
    pub q_d_rate: TangentVector,
    pub f: f64,
}

/// Arguments of the inner and outer saturations, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SaturationArgs {
    pub inner: Vec3,
    pub outer: Vec3,
}

impl SaturationArgs {
    /// Whether every argument lies inside its linear zone.
    pub fn linear(&self, gains: &PositionGains) -> bool {
        self.inner.amax() <= gains.sigma1.a && self.outer.amax() <= gains.sigma2.a
    }
}

pub fn saturation_args(err: &TranslationalErrors, m: f64, gains: &PositionGains) -> SaturationArgs {
    let inner = err.e_v * (gains.k2 * m) + err.e_x * gains.k1;
    let outer = err.e_v * (gains.k1 / gains.k2) + inner.map(|s| gains.sigma1.value(s));
    SaturationArgs { inner, outer }
}

pub fn sigma_bar(err: &TranslationalErrors, m: f64, gains: &PositionGains) -> Vec3 {
    -saturation_args(err, m, gains).outer.map(|s| gains.sigma2.value(s))
}

/// Time derivative of `sigma_bar` given the error rates.
pub fn sigma_bar_rate(
    err: &TranslationalErrors,
    e_v_rate: &Vec3,
    m: f64,
    gains: &PositionGains,
) -> Vec3 {
    let args = saturation_args(err, m, gains);
    let inner_rate = e_v_rate * (gains.k2 * m) + err.e_v * gains.k1;
    let mut out = Vec3::zeros();
    for i in 0..3 {
        let outer_rate = e_v_rate[i] * (gains.k1 / gains.k2)
            + gains.sigma1.derivative(args.inner[i]) * inner_rate[i];
        out[i] = -gains.sigma2.derivative(args.outer[i]) * outer_rate;
    }
    out
}

/// Feedforward force `m a_d + m g e3`.
pub fn feedforward_force(a_d: &Vec3, m: f64, g: f64) -> Vec3 {
    a_d * m + Vec3::z() * (m * g)
}

/// Returns `(f_hat, f_d)`.
pub fn commanded_thrust_vector(
    err: &TranslationalErrors,
    a_d: &Vec3,
    m: f64,
    g: f64,
    gains: &PositionGains,
) -> (Vec3, Vec3) {
    let f_d = feedforward_force(a_d, m, g);
    let f_hat = sigma_bar(err, m, gains) + f_d;
    if f_hat.norm() < F_FLOOR {
        log::warn!(
            "thrust vector |f_hat| = {:.3e} N below floor; outer saturation bound too large for this trajectory",
            f_hat.norm()
        );
    }
    (f_hat, f_d)
}

fn check_floor(f_hat: &Vec3) -> Result<f64, PositionError> {
    let n = f_hat.norm();
    if n < F_FLOOR || !n.is_finite() {
        return Err(PositionError::DegenerateThrust {
            norm: n,
            floor: F_FLOOR,
        });
    }
    Ok(n)
}

pub fn commanded_reduced_attitude(f_hat: &Vec3) -> Result<UnitVector3, PositionError> {
    let n = check_floor(f_hat)?;
    Ok(UnitVector3::new(f_hat / n).expect("norm checked above"))
}

/// Rate of the thrust direction: the component of `f_hat_rate / |f_hat|`
/// orthogonal to `q_d`.
pub fn qd_rate(f_hat: &Vec3, f_hat_rate: &Vec3) -> Result<TangentVector, PositionError> {
    let n = check_floor(f_hat)?;
    let q_d = UnitVector3::new(f_hat / n).expect("norm checked above");
    Ok(TangentVector::projected(q_d, &(f_hat_rate / n)))
}

/// Rate of `f_hat` along the model: `e_x' = e_v`,
/// `e_v' = -g e3 + (f / m) R e3 - a_d`, `f_d' = m j_d`.
#[allow(clippy::too_many_arguments)]
pub fn f_hat_rate(
    err: &TranslationalErrors,
    a_d: &Vec3,
    j_d: &Vec3,
    f: f64,
    r: &RotationMatrix,
    m: f64,
    g: f64,
    gains: &PositionGains,
) -> Vec3 {
    let e_v_rate = -Vec3::z() * g + r.axis(2) * (f / m) - a_d;
    sigma_bar_rate(err, &e_v_rate, m, gains) + j_d * m
}

pub fn collective_thrust(f_hat: &Vec3, r: &RotationMatrix) -> f64 {
    f_hat.dot(&r.axis(2))
}
