//! Fixed-step closed-loop simulation, scenario configuration, metrics and
//! log output.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attitude::{AttitudeGains, BasinCheck};
use crate::certify::{build_certificate, check_initial_condition, CertifyInputs, GainCertificate};
use crate::control::{ControlError, ControlOutput, Controller, ControllerConfig, OmegaRateSource};
use crate::geometry::{exp_so3, ErrorFunction, GeometryError, RotationMatrix, Vec3};
use crate::plant::{
    state_derivative, InertialParams, RigidBodyState, RotorMode, RotorParams, Wrench,
};
use crate::position::{PositionError, PositionGains};
use crate::reference::{validate_b2, B2Check, Trajectory};
use crate::SimError;

/// Attitude drift that triggers re-orthonormalization.
pub const REORTHO_TOL: f64 = 1e-12;
/// State magnitude treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;
/// Ψ level below which the Lyapunov decrease is no longer tracked.
pub const PSI_FLOOR: f64 = 1e-6;

/// Attitude weight used by the scenario presets.
pub const PRESET_ALPHA: f64 = 200.0;

// ---------------------------------------------------------------------------
// Integrator

/// Inverse of the left-trivialized exponential differential, truncated after
/// the terms a fourth-order method needs.
fn dexp_inv(theta: &Vec3, w: &Vec3) -> Vec3 {
    w + theta.cross(w) * 0.5 + theta.cross(&theta.cross(w)) / 12.0
}

/// One fourth-order Runge–Kutta–Munthe-Kaas step under a constant wrench.
/// Translational and rate states use classical RK4; the attitude is advanced
/// by a single exponential of the averaged Lie-algebra increment.
pub fn step(
    s: &RigidBodyState,
    w: &Wrench,
    p: &InertialParams,
    rotor: &RotorParams,
    dt: f64,
) -> Result<RigidBodyState, SimError> {
    let stage = |theta: &Vec3, x: Vec3, v: Vec3, omega: Vec3| {
        let probe = RigidBodyState {
            x,
            v,
            r: RotationMatrix::from_matrix_unchecked(s.r.matrix() * exp_so3(theta)),
            omega,
        };
        state_derivative(&probe, w, p, rotor)
    };

    let zero = Vec3::zeros();
    let a1 = stage(&zero, s.x, s.v, s.omega);
    let k1 = a1.body_rate;

    let th2 = k1 * (dt / 2.0);
    let a2 = stage(
        &th2,
        s.x + a1.x_dot * (dt / 2.0),
        s.v + a1.v_dot * (dt / 2.0),
        s.omega + a1.omega_dot * (dt / 2.0),
    );
    let k2 = dexp_inv(&th2, &a2.body_rate);

    let th3 = k2 * (dt / 2.0);
    let a3 = stage(
        &th3,
        s.x + a2.x_dot * (dt / 2.0),
        s.v + a2.v_dot * (dt / 2.0),
        s.omega + a2.omega_dot * (dt / 2.0),
    );
    let k3 = dexp_inv(&th3, &a3.body_rate);

    let th4 = k3 * dt;
    let a4 = stage(
        &th4,
        s.x + a3.x_dot * dt,
        s.v + a3.v_dot * dt,
        s.omega + a3.omega_dot * dt,
    );
    let k4 = dexp_inv(&th4, &a4.body_rate);

    let avg = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + b * 2.0 + c * 2.0 + d) * (dt / 6.0);
    let mut r = s.r.right_increment(&avg(k1, k2, k3, k4));
    if r.orthonormality_error() > REORTHO_TOL {
        r = r.reorthonormalized();
    }
    let next = RigidBodyState {
        x: s.x + avg(a1.x_dot, a2.x_dot, a3.x_dot, a4.x_dot),
        v: s.v + avg(a1.v_dot, a2.v_dot, a3.v_dot, a4.v_dot),
        r,
        omega: s.omega + avg(a1.omega_dot, a2.omega_dot, a3.omega_dot, a4.omega_dot),
    };
    if !next.is_finite() {
        return Err(SimError::Diverged {
            t: f64::NAN,
            reason: "non-finite state".into(),
        });
    }
    Ok(next)
}

// ---------------------------------------------------------------------------
// Configuration

/// Initial attitude, either as a matrix or as roll/pitch/yaw in degrees
/// (applied as `Rz(yaw) Ry(pitch) Rx(roll)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttitudeInit {
    Matrix { matrix: RotationMatrix },
    Euler {
        #[serde(default)]
        roll_deg: f64,
        #[serde(default)]
        pitch_deg: f64,
        #[serde(default)]
        yaw_deg: f64,
    },
}

impl Default for AttitudeInit {
    fn default() -> Self {
        AttitudeInit::Euler {
            roll_deg: 0.0,
            pitch_deg: 0.0,
            yaw_deg: 0.0,
        }
    }
}

impl AttitudeInit {
    pub fn rotation(&self) -> RotationMatrix {
        match *self {
            AttitudeInit::Matrix { matrix } => matrix,
            AttitudeInit::Euler {
                roll_deg,
                pitch_deg,
                yaw_deg,
            } => {
                RotationMatrix::about_z(yaw_deg.to_radians())
                    * RotationMatrix::about_y(pitch_deg.to_radians())
                    * RotationMatrix::about_x(roll_deg.to_radians())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub x: Vec3,
    pub v: Vec3,
    pub attitude: AttitudeInit,
    pub omega: Vec3,
}

impl InitialState {
    pub fn state(&self) -> RigidBodyState {
        RigidBodyState {
            x: self.x,
            v: self.v,
            r: self.attitude.rotation(),
            omega: self.omega,
        }
    }
}

impl From<RigidBodyState> for InitialState {
    fn from(s: RigidBodyState) -> Self {
        Self {
            x: s.x,
            v: s.v,
            attitude: AttitudeInit::Matrix { matrix: s.r },
            omega: s.omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySettings {
    /// Tilt bound assumed after the attitude transient (deg).
    pub theta0_deg: f64,
    /// Cross-term weight of the translational Lyapunov function.
    pub c: f64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            theta0_deg: 30.0,
            c: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub psi_threshold: f64,
    pub ex_threshold: f64,
    /// Length of the trailing window used for steady-state figures (s).
    pub tail_window: f64,
    /// Length of the leading window used for transient figures (s).
    pub head_window: f64,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            psi_threshold: 0.02,
            ex_threshold: 0.1,
            tail_window: 5.0,
            head_window: 2.0,
        }
    }
}

fn default_name() -> String {
    "scenario".into()
}

fn default_dt() -> f64 {
    1e-3
}

fn default_rate() -> f64 {
    1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub inertial: InertialParams,
    #[serde(default)]
    pub rotor: RotorParams,
    #[serde(default)]
    pub attitude_gains: AttitudeGains,
    #[serde(default)]
    pub position_gains: PositionGains,
    #[serde(default)]
    pub trajectory: Trajectory,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Simulated time (s).
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt_physics: f64,
    /// Controller update rate (Hz).
    #[serde(default = "default_rate")]
    pub control_rate: f64,
    /// Seed for randomized suites built on this scenario.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub error_function: ErrorFunction,
    #[serde(default)]
    pub omega_rate: OmegaRateSource,
    /// Plant equal to the controller model and no robust term.
    #[serde(default)]
    pub exact_model: bool,
    #[serde(default)]
    pub certify: CertifySettings,
    #[serde(default)]
    pub metrics: MetricsSettings,
}

impl ScenarioConfig {
    /// Variable-pitch vehicle recovering from a 140° roll onto the figure-eight.
    pub fn scenario_vp() -> Self {
        Self {
            name: "variable_pitch".into(),
            inertial: InertialParams::default(),
            rotor: RotorParams::variable_pitch(),
            attitude_gains: AttitudeGains {
                alpha: PRESET_ALPHA,
                ..AttitudeGains::default()
            },
            position_gains: PositionGains::default(),
            trajectory: Trajectory::default(),
            initial_state: InitialState {
                x: Vec3::new(5.0, 5.0, 5.0),
                v: Vec3::zeros(),
                attitude: AttitudeInit::Euler {
                    roll_deg: 140.0,
                    pitch_deg: 0.0,
                    yaw_deg: 0.0,
                },
                omega: Vec3::zeros(),
            },
            duration: 20.0,
            dt_physics: default_dt(),
            control_rate: default_rate(),
            seed: 0,
            error_function: ErrorFunction::Paper,
            omega_rate: OmegaRateSource::default(),
            exact_model: false,
            certify: CertifySettings::default(),
            metrics: MetricsSettings::default(),
        }
    }

    /// Heavier vehicle with strictly positive thrusts and an initial yaw spin.
    pub fn scenario_ct() -> Self {
        let mut cfg = Self::scenario_vp();
        cfg.name = "constrained_thrust".into();
        cfg.inertial.m = 3.0;
        cfg.rotor = RotorParams::conventional();
        cfg.initial_state.omega = Vec3::new(0.0, 0.0, std::f64::consts::TAU);
        cfg
    }

    /// Level start at rest on a hover point.
    pub fn hover() -> Self {
        let point = Vec3::new(0.0, 0.0, 5.0);
        let mut cfg = Self::scenario_vp();
        cfg.name = "hover".into();
        cfg.trajectory = Trajectory::Hover { point };
        cfg.initial_state = InitialState {
            x: point,
            ..InitialState::default()
        };
        cfg.duration = 5.0;
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "vp" | "variable_pitch" => Some(Self::scenario_vp()),
            "ct" | "constrained_thrust" => Some(Self::scenario_ct()),
            "hover" => Some(Self::hover()),
            _ => None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Physics steps per control tick.
    pub fn steps_per_tick(&self) -> Result<usize, SimError> {
        let ratio = 1.0 / (self.control_rate * self.dt_physics);
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
            return Err(SimError::InvalidConfig(format!(
                "control period 1/{} must be a whole multiple of dt_physics = {}",
                self.control_rate, self.dt_physics
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = SimError::InvalidConfig;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(bad(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.dt_physics > 0.0) {
            return Err(bad(format!("dt_physics must be positive, got {}", self.dt_physics)));
        }
        if !(self.control_rate > 0.0) {
            return Err(bad(format!("control_rate must be positive, got {}", self.control_rate)));
        }
        if self.dt_physics > 1.0 / self.control_rate * (1.0 + 1e-12) {
            return Err(bad("dt_physics must not exceed the control period".into()));
        }
        self.steps_per_tick()?;
        self.inertial.validate().map_err(bad)?;
        self.rotor.validate().map_err(bad)?;
        self.attitude_gains.validate().map_err(bad)?;
        self.position_gains
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        self.trajectory.validate().map_err(bad)?;
        match self.omega_rate {
            OmegaRateSource::Filtered { cutoff } if !(cutoff > 0.0) => {
                return Err(bad("filter cutoff must be positive".into()))
            }
            OmegaRateSource::ModelFlow { step } if !(step > 0.0) => {
                return Err(bad("model-flow step must be positive".into()))
            }
            _ => {}
        }
        if !self.initial_state.state().is_finite() {
            return Err(bad("initial state must be finite".into()));
        }
        if !(self.certify.theta0_deg > 0.0 && self.certify.theta0_deg < 90.0) {
            return Err(bad("theta0_deg must lie in (0, 90)".into()));
        }
        Ok(())
    }

    /// The configuration actually simulated: with `exact_model`, the plant
    /// inertia becomes the nominal diagonal, rotor inertia and drag vanish,
    /// and the robust term is switched off.
    pub fn effective(&self) -> Self {
        let mut cfg = self.clone();
        if cfg.exact_model {
            cfg.inertial = cfg.inertial.exact_model();
            cfg.attitude_gains.delta = 0.0;
        }
        cfg
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            m: self.inertial.m,
            g: self.inertial.g,
            j_nominal: self.inertial.j_nominal,
            attitude: self.attitude_gains,
            position: self.position_gains,
            error_fn: self.error_function,
            omega_rate: self.omega_rate,
            trajectory: self.trajectory,
            dt: 1.0 / self.control_rate,
        }
    }
}

/// Uniformly random attitude and an angular velocity uniform in a ball.
pub fn random_initial_state<R: Rng>(rng: &mut R, x: Vec3, omega_max: f64) -> RigidBodyState {
    // Uniform unit quaternion (Shoemake).
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = nalgebra::Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    );
    let rot = nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    let r = RotationMatrix::new(*rot.matrix()).unwrap_or_else(|_| {
        RotationMatrix::from_matrix_unchecked(*rot.matrix()).reorthonormalized()
    });
    let omega = loop {
        let c = Vec3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        );
        if c.norm_squared() <= 1.0 {
            break c * omega_max;
        }
    };
    RigidBodyState {
        x,
        v: Vec3::zeros(),
        r,
        omega,
    }
}

/// `n` copies of `cfg` started from random states inside the attitude basin,
/// drawn from `cfg.seed` (one ChaCha stream per copy). Draws that fail the
/// basin test are repeated; `None` if one copy needs more than 1000 draws.
pub fn randomized_starts(cfg: &ScenarioConfig, n: usize, omega_max: f64) -> Option<Vec<ScenarioConfig>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            (0..1000).find_map(|_| {
                let mut c = cfg.clone();
                c.name = format!("{}_{i}", cfg.name);
                c.initial_state = random_initial_state(&mut rng, cfg.initial_state.x, omega_max).into();
                preflight(&c).basin.filter(|b| b.inside).map(|_| c)
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Logging

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRecord {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
    pub r: [f64; 9],
    pub omega: Vec3,
    pub q: Vec3,
    pub q_d: Vec3,
    pub psi: f64,
    pub e_x: Vec3,
    pub e_v: Vec3,
    pub e_omega: [f64; 2],
    pub omega_d: [f64; 2],
    pub u: [f64; 2],
    pub f: f64,
    pub f_hat: Vec3,
    pub thrust: [f64; 3],
    pub pitch: [f64; 3],
    pub saturated: [bool; 3],
    pub v1: f64,
    pub sat_inner: Vec3,
    pub sat_outer: Vec3,
    /// Whether the controller updated at this step.
    #[serde(skip)]
    pub tick: bool,
}

/// CSV header, in record order.
pub fn log_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    fn tri(p: &str) -> Vec<String> {
        (1..=3).map(|i| format!("{p}_{i}")).collect()
    }
    fn duo(p: &str) -> Vec<String> {
        (1..=2).map(|i| format!("{p}_{i}")).collect()
    }
    cols.extend(tri("x"));
    cols.extend(tri("v"));
    for i in 1..=3 {
        for j in 1..=3 {
            cols.push(format!("R_{i}{j}"));
        }
    }
    cols.extend(tri("Omega"));
    cols.extend(tri("q"));
    cols.extend(tri("q_d"));
    cols.push("psi".into());
    cols.extend(tri("e_x"));
    cols.extend(tri("e_v"));
    cols.extend(duo("e_Omega"));
    cols.extend(duo("Omega_d"));
    cols.extend(duo("U"));
    cols.push("f".into());
    cols.extend(tri("f_hat"));
    cols.extend(tri("T"));
    cols.extend(tri("gamma"));
    cols.extend(tri("sat"));
    cols.push("V1".into());
    cols.extend(tri("sat_inner"));
    cols.extend(tri("sat_outer"));
    cols
}

impl LogRecord {
    fn from_parts(
        t: f64,
        s: &RigidBodyState,
        ctl: &ControlOutput,
        error_fn: ErrorFunction,
        tick: bool,
    ) -> Self {
        let q = s.r.reduced_attitude();
        let th = &ctl.outer.thrust;
        let rotors = &ctl.allocation.rotors;
        Self {
            t,
            x: s.x,
            v: s.v,
            r: s.r.row_major(),
            omega: s.omega,
            q: *q.as_vec(),
            q_d: *th.q_d.as_vec(),
            psi: error_fn.psi(&q, &th.q_d),
            e_x: ctl.outer.errors.e_x,
            e_v: ctl.outer.errors.e_v,
            e_omega: ctl.attitude_errors.e_omega.into(),
            omega_d: ctl.command.omega_d.into(),
            u: ctl.torque.u.into(),
            f: th.f,
            f_hat: th.f_hat,
            thrust: rotors.thrust,
            pitch: rotors.pitch,
            saturated: ctl.allocation.saturated,
            v1: ctl.v1,
            sat_inner: ctl.outer.sat_args.inner,
            sat_outer: ctl.outer.sat_args.outer,
            tick,
        }
    }

    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }

    fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut vals: Vec<f64> = Vec::with_capacity(64);
        vals.push(self.t);
        vals.extend(self.x.iter());
        vals.extend(self.v.iter());
        vals.extend(self.r);
        vals.extend(self.omega.iter());
        vals.extend(self.q.iter());
        vals.extend(self.q_d.iter());
        vals.push(self.psi);
        vals.extend(self.e_x.iter());
        vals.extend(self.e_v.iter());
        vals.extend(self.e_omega);
        vals.extend(self.omega_d);
        vals.extend(self.u);
        vals.push(self.f);
        vals.extend(self.f_hat.iter());
        vals.extend(self.thrust);
        vals.extend(self.pitch);
        vals.extend(self.saturated.map(|s| if s { 1.0 } else { 0.0 }));
        vals.push(self.v1);
        vals.extend(self.sat_inner.iter());
        vals.extend(self.sat_outer.iter());
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))
    }
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub psi_threshold: f64,
    pub ex_threshold: f64,
    /// Earliest time after which Ψ stays below its threshold.
    pub settle_time_psi: Option<f64>,
    /// Earliest time after which `|e_x|` stays below its threshold.
    pub settle_time_ex: Option<f64>,
    pub sup_psi: f64,
    pub final_ex_norm: f64,
    /// Largest rotor thrust magnitude (N).
    pub max_thrust: f64,
    /// Smallest delivered rotor thrust (N).
    pub min_thrust: f64,
    pub saturation_fraction: f64,
    pub v1_monotone_fraction: f64,
    pub tail_window: f64,
    pub tail_max_ex_norm: f64,
    pub tail_saturation_fraction: f64,
    pub head_window: f64,
    pub head_saturation_fraction: f64,
    pub omega3_max_abs: f64,
    pub tail_omega3_sup: f64,
    pub max_orthonormality_error: f64,
    pub simulated_time: f64,
}

fn settle_time<F: Fn(&LogRecord) -> bool>(log: &[LogRecord], inside: F) -> Option<f64> {
    let last_out = log.iter().rposition(|r| !inside(r));
    match last_out {
        None => Some(log[0].t),
        Some(i) if i + 1 < log.len() => Some(log[i + 1].t),
        Some(_) => None,
    }
}

fn fraction<I: Iterator<Item = bool>>(it: I) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for b in it {
        total += 1;
        hit += b as usize;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Fraction of control ticks with `V1` non-increasing, counted while Ψ at the
/// previous tick exceeds [`PSI_FLOOR`].
pub fn v1_monotone_fraction(log: &[LogRecord]) -> f64 {
    let ticks: Vec<&LogRecord> = log.iter().filter(|r| r.tick).collect();
    let mut counted = 0usize;
    let mut ok = 0usize;
    for w in ticks.windows(2) {
        if w[0].psi > PSI_FLOOR {
            counted += 1;
            ok += (w[1].v1 <= w[0].v1) as usize;
        }
    }
    if counted == 0 {
        1.0
    } else {
        ok as f64 / counted as f64
    }
}

pub fn compute_metrics(log: &[LogRecord], settings: &MetricsSettings) -> RunMetrics {
    assert!(!log.is_empty(), "metrics need at least one record");
    let last = log.last().expect("non-empty");
    let t_end = last.t;
    let tail: Vec<&LogRecord> = log
        .iter()
        .filter(|r| r.t >= t_end - settings.tail_window)
        .collect();
    let head = log.iter().filter(|r| r.t < log[0].t + settings.head_window);
    let ortho = log
        .iter()
        .map(|r| {
            let m = crate::geometry::Mat3::from_row_slice(&r.r);
            crate::geometry::orthonormality_error(&m)
        })
        .fold(0.0, f64::max);
    RunMetrics {
        psi_threshold: settings.psi_threshold,
        ex_threshold: settings.ex_threshold,
        settle_time_psi: settle_time(log, |r| r.psi < settings.psi_threshold),
        settle_time_ex: settle_time(log, |r| r.e_x.norm() < settings.ex_threshold),
        sup_psi: log.iter().map(|r| r.psi).fold(0.0, f64::max),
        final_ex_norm: last.e_x.norm(),
        max_thrust: log
            .iter()
            .flat_map(|r| r.thrust)
            .map(f64::abs)
            .fold(0.0, f64::max),
        min_thrust: log
            .iter()
            .flat_map(|r| r.thrust)
            .fold(f64::INFINITY, f64::min),
        saturation_fraction: fraction(log.iter().map(LogRecord::any_saturated)),
        v1_monotone_fraction: v1_monotone_fraction(log),
        tail_window: settings.tail_window,
        tail_max_ex_norm: tail.iter().map(|r| r.e_x.norm()).fold(0.0, f64::max),
        tail_saturation_fraction: fraction(tail.iter().map(|r| r.any_saturated())),
        head_window: settings.head_window,
        head_saturation_fraction: fraction(head.map(LogRecord::any_saturated)),
        omega3_max_abs: log.iter().map(|r| r.omega.z.abs()).fold(0.0, f64::max),
        tail_omega3_sup: tail.iter().map(|r| r.omega.z.abs()).fold(0.0, f64::max),
        max_orthonormality_error: ortho,
        simulated_time: t_end,
    }
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { t: f64, reason: String },
    DegenerateThrust { t: f64, norm: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn to_error(&self) -> Option<SimError> {
        match self {
            RunStatus::Completed => None,
            RunStatus::Diverged { t, reason } => Some(SimError::Diverged {
                t: *t,
                reason: reason.clone(),
            }),
            RunStatus::DegenerateThrust { t, norm } => {
                Some(SimError::DegenerateThrust { t: *t, norm: *norm })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preflight {
    pub certificate: GainCertificate,
    pub outer_bound: B2Check,
    /// `None` when the initial command could not be formed.
    pub basin: Option<BasinCheck>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub log: Vec<LogRecord>,
    pub metrics: RunMetrics,
    pub status: RunStatus,
    pub preflight: Preflight,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    status: &'a RunStatus,
    metrics: &'a RunMetrics,
    preflight: &'a Preflight,
    config: &'a ScenarioConfig,
}

impl RunOutput {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&Summary {
            scenario: &self.config.name,
            status: &self.status,
            metrics: &self.metrics,
            preflight: &self.preflight,
            config: &self.config,
        })
        .expect("summary serializes")
    }
}

fn classify(t: f64, e: ControlError) -> RunStatus {
    match e {
        ControlError::Position(PositionError::DegenerateThrust { norm, .. }) => {
            RunStatus::DegenerateThrust { t, norm }
        }
        ControlError::Position(other) => RunStatus::Diverged {
            t,
            reason: other.to_string(),
        },
        ControlError::Attitude(GeometryError::Antipodal(c)) => RunStatus::Diverged {
            t,
            reason: format!("attitude reached the antipode of its command (q_d.q = {c})"),
        },
        ControlError::Attitude(other) => RunStatus::Diverged {
            t,
            reason: other.to_string(),
        },
    }
}

/// Gain certificate, outer-bound feasibility and basin test for `cfg`.
pub fn preflight(cfg: &ScenarioConfig) -> Preflight {
    let cfg = cfg.effective();
    let certificate = build_certificate(&CertifyInputs {
        position: &cfg.position_gains,
        attitude: &cfg.attitude_gains,
        m: cfg.inertial.m,
        g: cfg.inertial.g,
        trajectory: &cfg.trajectory,
        horizon: cfg.duration,
        theta0: cfg.certify.theta0_deg.to_radians(),
        c: cfg.certify.c,
    });
    let outer_bound = validate_b2(
        &cfg.trajectory,
        cfg.duration,
        cfg.inertial.m,
        cfg.inertial.g,
        cfg.position_gains.sigma2.b(),
    );
    let state0 = cfg.initial_state.state();
    let mut ctl = Controller::new(cfg.controller_config());
    let basin = ctl
        .update(0.0, &state0, &cfg.rotor)
        .ok()
        .map(|out| check_initial_condition(&state0, &out.command, cfg.attitude_gains.alpha, cfg.error_function));

    let mut warnings = Vec::new();
    if !outer_bound.feasible {
        warnings.push(format!(
            "outer saturation bound {} is not below inf |f_d|_inf = {:.4}; the thrust command may vanish",
            cfg.position_gains.sigma2.b(),
            outer_bound.inf_norm
        ));
    }
    match basin {
        Some(b) if !b.inside => warnings.push(format!(
            "initial condition outside the attitude basin (margin {:.4})",
            b.margin
        )),
        None => warnings.push("initial command undefined".into()),
        _ => {}
    }
    if !certificate.passes.all() {
        warnings.extend(certificate.notes.iter().cloned());
    }
    Preflight {
        certificate,
        outer_bound,
        basin,
        warnings,
    }
}

/// Simulate `cfg` from its initial state. Only an invalid configuration is
/// an `Err`; runtime failures end the run early and are reported in
/// [`RunOutput::status`].
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let pre = preflight(cfg);
    for w in &pre.warnings {
        log::warn!("{}: {w}", cfg.name);
    }
    let cfg = cfg.effective();
    let spt = cfg.steps_per_tick()?;
    let dt = cfg.dt_physics;
    let n_steps = (cfg.duration / dt).round() as usize;

    let mut ctl = Controller::new(cfg.controller_config());
    let mut state = cfg.initial_state.state();
    let mut log = Vec::with_capacity(n_steps);
    let mut status = RunStatus::Completed;
    let mut held: Option<ControlOutput> = None;

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let tick = k % spt == 0;
        if tick {
            match ctl.update(t, &state, &cfg.rotor) {
                Ok(out) => held = Some(out),
                Err(e) => {
                    status = classify(t, e);
                    break;
                }
            }
        }
        let out = held.as_ref().expect("first step is a tick");
        log.push(LogRecord::from_parts(t, &state, out, cfg.error_function, tick));
        match step(&state, &out.allocation.realized_wrench, &cfg.inertial, &cfg.rotor, dt) {
            Ok(next) => state = next,
            Err(_) => {
                status = RunStatus::Diverged {
                    t: t + dt,
                    reason: "non-finite state".into(),
                };
                break;
            }
        }
        let size = state.x.amax().max(state.v.amax()).max(state.omega.amax());
        if size > DIVERGENCE_BOUND {
            status = RunStatus::Diverged {
                t: t + dt,
                reason: format!("state magnitude {size:.3e} exceeds {DIVERGENCE_BOUND:e}"),
            };
            break;
        }
    }

    if log.is_empty() {
        return Ok(RunOutput {
            metrics: RunMetrics::empty(&cfg.metrics),
            config: cfg,
            log,
            status,
            preflight: pre,
        });
    }
    let metrics = compute_metrics(&log, &cfg.metrics);
    if cfg.rotor.mode == RotorMode::Conventional {
        debug_assert!(metrics.min_thrust >= cfg.rotor.thrust_min);
    }
    Ok(RunOutput {
        config: cfg,
        log,
        metrics,
        status,
        preflight: pre,
    })
}

impl RunMetrics {
    fn empty(s: &MetricsSettings) -> Self {
        Self {
            psi_threshold: s.psi_threshold,
            ex_threshold: s.ex_threshold,
            settle_time_psi: None,
            settle_time_ex: None,
            sup_psi: f64::NAN,
            final_ex_norm: f64::NAN,
            max_thrust: f64::NAN,
            min_thrust: f64::NAN,
            saturation_fraction: f64::NAN,
            v1_monotone_fraction: f64::NAN,
            tail_window: s.tail_window,
            tail_max_ex_norm: f64::NAN,
            tail_saturation_fraction: f64::NAN,
            head_window: s.head_window,
            head_saturation_fraction: f64::NAN,
            omega3_max_abs: f64::NAN,
            tail_omega3_sup: f64::NAN,
            max_orthonormality_error: f64::NAN,
            simulated_time: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Output

pub fn write_log_csv<W: Write>(w: &mut W, log: &[LogRecord]) -> io::Result<()> {
    writeln!(w, "{}", log_columns().join(","))?;
    for r in log {
        r.write_csv(w)?;
    }
    Ok(())
}

fn write_series<F: Fn(&LogRecord) -> f64>(
    path: &Path,
    label: &str,
    log: &[LogRecord],
    value: F,
) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# t {label}")?;
    for r in log {
        writeln!(w, "{} {}", r.t, value(r))?;
    }
    w.flush()
}

/// Two-column `t value` files for plotting.
pub fn write_plot_extracts(dir: &Path, log: &[LogRecord]) -> io::Result<()> {
    write_series(&dir.join("psi.dat"), "psi", log, |r| r.psi)?;
    write_series(&dir.join("ex_norm.dat"), "|e_x|", log, |r| r.e_x.norm())?;
    for i in 0..3 {
        write_series(&dir.join(format!("omega{}.dat", i + 1)), &format!("Omega_{}", i + 1), log, |r| r.omega[i])?;
        write_series(&dir.join(format!("thrust{}.dat", i + 1)), &format!("T_{}", i + 1), log, |r| r.thrust[i])?;
    }
    Ok(())
}

/// `log.csv`, `metrics.json` and the plot extracts.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("log.csv"))?);
    write_log_csv(&mut w, &out.log)?;
    w.flush()?;
    fs::write(dir.join("metrics.json"), out.summary_json())?;
    write_plot_extracts(dir, &out.log)
}
