//! Model-free visual controller.
//!
//! Pixel errors between a pitch-adjusted setpoint and the predicted target
//! center drive a world-frame force; the force yields collective thrust and,
//! together with a yaw increment, a desired attitude. [`attitude`] and
//! [`mixer`] turn that into rotor thrusts.

pub mod attitude;
pub mod mixer;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attitude::{attitude_control, AttitudeGains};
pub use mixer::{mix, MixerGeometry, MotorCommand};

use crate::geometry::{pitch_yaw_from_rotation, wrap_angle, CameraModel, GeometryError, PixelPoint, Rotation};

pub const GRAVITY: f64 = 9.81;
const MIN_FORCE: f64 = 1e-6;
const MIN_HEADING: f64 = 1e-6;
/// Vertical force floor as a fraction of weight.
const MIN_LIFT_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("time regression: control tick at t = {t} after t = {previous}")]
    TimeRegression { t: f64, previous: f64 },
    #[error("degenerate desired force |f_d| = {0:e} N")]
    DegenerateForce(f64),
    #[error("desired thrust direction is parallel to the heading")]
    DegenerateHeading,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid controller configuration: {0}")]
    Config(String),
}

fn d_kp_roll() -> f64 {
    0.05
}
fn d_kd_roll() -> f64 {
    0.001
}
fn d_kp_thrust() -> f64 {
    0.08
}
fn d_kd_thrust() -> f64 {
    0.00025
}
fn d_kp_yaw() -> f64 {
    0.095
}
fn d_kd_yaw() -> f64 {
    0.0004
}
fn d_beta() -> f64 {
    0.15
}
fn d_pitch_accel() -> f64 {
    0.5
}
fn d_mass() -> f64 {
    1.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    #[serde(default = "d_kp_roll")]
    pub kp_roll: f64,
    #[serde(default = "d_kd_roll")]
    pub kd_roll: f64,
    #[serde(default = "d_kp_thrust")]
    pub kp_thrust: f64,
    #[serde(default = "d_kd_thrust")]
    pub kd_thrust: f64,
    #[serde(default = "d_kp_yaw")]
    pub kp_yaw: f64,
    #[serde(default = "d_kd_yaw")]
    pub kd_yaw: f64,
    /// Pitch-acceleration filter coefficient.
    #[serde(default = "d_beta")]
    pub beta: f64,
    /// Fixed forward acceleration target `ā_θ`, m/s².
    #[serde(default = "d_pitch_accel")]
    pub pitch_accel: f64,
    #[serde(default = "d_mass")]
    pub mass: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp_roll: d_kp_roll(),
            kd_roll: d_kd_roll(),
            kp_thrust: d_kp_thrust(),
            kd_thrust: d_kd_thrust(),
            kp_yaw: d_kp_yaw(),
            kd_yaw: d_kd_yaw(),
            beta: d_beta(),
            pitch_accel: d_pitch_accel(),
            mass: d_mass(),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let gains = [self.kp_roll, self.kd_roll, self.kp_thrust, self.kd_thrust, self.kp_yaw, self.kd_yaw];
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(ControlError::Config("gains must be non-negative".into()));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(ControlError::Config(format!("mass {} must be positive", self.mass)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(ControlError::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !self.pitch_accel.is_finite() {
            return Err(ControlError::Config("pitch_accel must be finite".into()));
        }
        Ok(())
    }
}

fn d_tau() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub attitude: AttitudeGains,
    /// Time constant of the error-derivative low-pass, seconds.
    #[serde(default = "d_tau")]
    pub derivative_time_constant: f64,
    /// Use `s_y = H/2 − 2θ/v` as printed instead of the pixel-scaled setpoint.
    #[serde(default)]
    pub eq11_literal: bool,
    /// Add gravity to the desired force as printed instead of compensating it.
    #[serde(default)]
    pub eq13_literal: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: ControllerGains::default(),
            attitude: AttitudeGains::default(),
            derivative_time_constant: d_tau(),
            eq11_literal: false,
            eq13_literal: false,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.gains.validate()?;
        self.attitude.validate()?;
        if !(self.derivative_time_constant >= 0.0 && self.derivative_time_constant.is_finite()) {
            return Err(ControlError::Config("derivative_time_constant must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoints {
    pub sx: f64,
    pub sy: f64,
    /// The pitch was too large to center the target and `sy` was clamped.
    pub saturated: bool,
}

/// Image setpoints for the target center given the current pitch.
pub fn setpoints(cam: &CameraModel, pitch: f64, literal: bool) -> Setpoints {
    let (w, h, v) = (cam.width(), cam.height(), cam.vfov());
    let raw = if literal { 0.5 * h - 2.0 * pitch / v } else { 0.5 * h * (1.0 - 2.0 * pitch / v) };
    let sy = raw.clamp(0.0, h);
    Setpoints { sx: 0.5 * w, sy, saturated: pitch.abs() >= v || sy != raw }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelErrors {
    pub e_w: f64,
    pub e_h: f64,
    pub de_w: f64,
    pub de_h: f64,
}

/// Error-derivative estimator: backward difference through a first-order low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDifferentiator {
    time_constant: f64,
    previous: Option<(f64, f64, f64)>,
    rate: (f64, f64),
}

impl ErrorDifferentiator {
    pub fn new(time_constant: f64) -> Self {
        Self { time_constant, previous: None, rate: (0.0, 0.0) }
    }

    pub fn reset(&mut self) {
        self.previous = None;
        self.rate = (0.0, 0.0);
    }

    /// Pixel errors `e = s − p` and their filtered derivatives at time `t`.
    pub fn update(&mut self, sp: &Setpoints, target: &PixelPoint, t: f64) -> Result<PixelErrors, ControlError> {
        let (e_w, e_h) = (sp.sx - target.u, sp.sy - target.v);
        if let Some((t0, w0, h0)) = self.previous {
            if t <= t0 {
                return Err(ControlError::TimeRegression { t, previous: t0 });
            }
            let dt = t - t0;
            let raw = ((e_w - w0) / dt, (e_h - h0) / dt);
            let a = if self.time_constant > 0.0 { 1.0 - (-dt / self.time_constant).exp() } else { 1.0 };
            self.rate = (self.rate.0 + a * (raw.0 - self.rate.0), self.rate.1 + a * (raw.1 - self.rate.1));
        }
        self.previous = Some((t, e_w, e_h));
        Ok(PixelErrors { e_w, e_h, de_w: self.rate.0, de_h: self.rate.1 })
    }
}

/// One step of the pitch-acceleration complementary filter.
pub fn pitch_accel_step(previous: f64, gains: &ControllerGains) -> f64 {
    gains.beta * previous + (1.0 - gains.beta) * gains.pitch_accel
}

/// Desired world-frame force from pixel errors and the current attitude.
///
/// Body axes are x forward, y left, z up. Gravity is compensated so that zero
/// errors at level attitude demand exactly the weight, unless `literal_gravity`.
pub fn desired_force(e: &PixelErrors, r: &Rotation, pitch_accel: f64, gains: &ControllerGains, literal_gravity: bool) -> Vector3<f64> {
    let body = Vector3::new(
        pitch_accel,
        gains.kp_roll * e.e_w + gains.kd_roll * e.de_w,
        gains.kp_thrust * e.e_h + gains.kd_thrust * e.de_h,
    );
    let g = Vector3::new(0.0, 0.0, -GRAVITY);
    let mut f = if literal_gravity { gains.mass * (r.apply(&body) + g) } else { gains.mass * (r.apply(&body) - g) };
    f.z = f.z.max(MIN_LIFT_FRACTION * gains.mass * GRAVITY);
    f
}

/// Collective thrust: the desired force projected on the body z axis, floored at zero.
pub fn thrust(f_d: &Vector3<f64>, r: &Rotation) -> f64 {
    (r.matrix().transpose() * f_d).z.max(0.0)
}

pub fn desired_yaw(yaw: f64, e_w: f64, de_w: f64, gains: &ControllerGains, dt: f64) -> f64 {
    wrap_angle(yaw + (gains.kp_yaw * e_w + gains.kd_yaw * de_w) * dt)
}

/// Attitude whose z axis is along `f_d` and whose x axis points as close to
/// the heading `[cos ψ_d, sin ψ_d, 0]` as that allows.
pub fn desired_rotation(f_d: &Vector3<f64>, yaw_d: f64) -> Result<Rotation, ControlError> {
    let n = f_d.norm();
    if !(n > MIN_FORCE) {
        return Err(ControlError::DegenerateForce(n));
    }
    let r3 = f_d / n;
    let heading = Vector3::new(yaw_d.cos(), yaw_d.sin(), 0.0);
    let side = r3.cross(&heading);
    let s = side.norm();
    if s <= MIN_HEADING {
        return Err(ControlError::DegenerateHeading);
    }
    let r2 = side / s;
    let r1 = r2.cross(&r3);
    let m = nalgebra::Matrix3::from_columns(&[r1, r2, r3]);
    // Cross products of unit vectors are orthonormal to rounding; project if not.
    Ok(Rotation::from_matrix(m).unwrap_or_else(|_| Rotation::project(&m)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub thrust: f64,
    pub rotation: Rotation,
    pub yaw: f64,
    pub force: Vector3<f64>,
}

/// Everything computed on one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: ControlCommand,
    pub setpoints: Setpoints,
    pub errors: PixelErrors,
    pub pitch_accel: f64,
}

/// Stateful wrapper running the full pixel-error to attitude pipeline.
#[derive(Debug, Clone)]
pub struct VisualController {
    cfg: ControllerConfig,
    cam: CameraModel,
    differentiator: ErrorDifferentiator,
    pitch_accel: f64,
}

impl VisualController {
    pub fn new(cfg: ControllerConfig, cam: CameraModel) -> Result<Self, ControlError> {
        cfg.validate()?;
        let differentiator = ErrorDifferentiator::new(cfg.derivative_time_constant);
        Ok(Self { cfg, cam, differentiator, pitch_accel: 0.0 })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn pitch_accel(&self) -> f64 {
        self.pitch_accel
    }

    /// Runs one control tick. Without a target the controller holds hover at the
    /// current heading and its filters stay untouched.
    pub fn tick(&mut self, t: f64, target: Option<&PixelPoint>, r: &Rotation, dt: f64) -> Result<ControlOutput, ControlError> {
        let (pitch, yaw) = pitch_yaw_from_rotation(r)?;
        let sp = setpoints(&self.cam, pitch, self.cfg.eq11_literal);
        let errors = match target {
            Some(p) => {
                self.pitch_accel = pitch_accel_step(self.pitch_accel, &self.cfg.gains);
                self.differentiator.update(&sp, p, t)?
            }
            None => PixelErrors::default(),
        };
        let gains = &self.cfg.gains;
        let force = desired_force(&errors, r, self.pitch_accel, gains, self.cfg.eq13_literal);
        let thrust = thrust(&force, r);
        let yaw_d = desired_yaw(yaw, errors.e_w, errors.de_w, gains, dt);
        let rotation = desired_rotation(&force, yaw_d)?;
        Ok(ControlOutput { command: ControlCommand { thrust, rotation, yaw: yaw_d, force }, setpoints: sp, errors, pitch_accel: self.pitch_accel })
    }
}

/// Per-tick command log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandTraceRecord {
    pub t: f64,
    pub tracking: bool,
    pub e_w: f64,
    pub e_h: f64,
    pub thrust: f64,
    pub yaw_d: f64,
    /// Desired attitude as `[w, x, y, z]`.
    pub q_d: [f64; 4],
    pub pitch_accel: f64,
    pub motors: [f64; 4],
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn zero() -> PixelErrors {
        PixelErrors::default()
    }

    #[test]
    fn setpoint_examples() {
        let cam = CameraModel::default();
        let s = setpoints(&cam, 0.0, false);
        assert_eq!((s.sx, s.sy), (480.0, 272.0));
        assert!(setpoints(&cam, cam.vfov() / 2.0, false).sy.abs() < 1e-12);
        let s = setpoints(&cam, 0.1, false);
        assert!((s.sy - 272.0 * (1.0 - 0.2 / 1.047)).abs() < 1e-9);
        assert!((s.sy - 220.04).abs() < 0.01);
        let lit = setpoints(&cam, 0.1, true);
        assert!((lit.sy - (272.0 - 0.2 / 1.047)).abs() < 1e-12);
        let sat = setpoints(&cam, 1.2, false);
        assert!(sat.saturated && sat.sy == 0.0);
        assert!(!s.saturated);
    }

    #[test]
    fn pixel_error_examples() {
        let sp = Setpoints { sx: 480.0, sy: 272.0, saturated: false };
        let mut d = ErrorDifferentiator::new(0.05);
        let e = d.update(&sp, &PixelPoint::new(500.0, 250.0), 0.0).unwrap();
        assert_eq!((e.e_w, e.e_h, e.de_w, e.de_h), (-20.0, 22.0, 0.0, 0.0));
        let e = d.update(&sp, &PixelPoint::new(480.0, 272.0), 0.01).unwrap();
        assert_eq!((e.e_w, e.e_h), (0.0, 0.0));
        assert!(matches!(d.update(&sp, &PixelPoint::new(480.0, 272.0), 0.01), Err(ControlError::TimeRegression { .. })));
    }

    #[test]
    fn derivative_tracks_constant_drift() {
        let sp = Setpoints { sx: 480.0, sy: 272.0, saturated: false };
        let mut d = ErrorDifferentiator::new(0.05);
        let mut e = zero();
        for k in 0..=100 {
            let t = k as f64 * 0.01;
            e = d.update(&sp, &PixelPoint::new(400.0 + 10.0 * t, 272.0), t).unwrap();
        }
        // step response of the low-pass after 20 time constants
        let oracle = -10.0 * (1.0 - (-1.0f64 / 0.05).exp());
        assert!((e.de_w - oracle).abs() < 1e-9);
        assert!((e.de_w + 10.0).abs() < 0.2);
    }

    #[test]
    fn pitch_accel_examples() {
        let g = ControllerGains::default();
        assert!((pitch_accel_step(0.0, &g) - 0.425).abs() < 1e-15);
        let frozen = ControllerGains { beta: 1.0, ..g };
        assert_eq!(pitch_accel_step(0.3, &frozen), 0.3);
        let mut a = 0.0;
        for n in 1..=50 {
            a = pitch_accel_step(a, &g);
            let closed = g.pitch_accel * (1.0 - g.beta.powi(n));
            assert!((a - closed).abs() < 1e-12);
            assert!((a - g.pitch_accel).abs() <= g.beta.powi(n) * g.pitch_accel + 1e-15);
        }
    }

    #[test]
    fn desired_force_examples() {
        let g = ControllerGains::default();
        let id = Rotation::identity();
        let f = desired_force(&zero(), &id, 0.0, &g, false);
        assert!((f - Vector3::new(0.0, 0.0, 1.3 * 9.81)).norm() < 1e-12);
        assert!((f.z - 12.753).abs() < 1e-9);
        let e = PixelErrors { e_h: 100.0, ..zero() };
        let f = desired_force(&e, &id, 0.0, &g, false);
        assert!((f.z - 1.3 * (0.08 * 100.0 + 9.81)).abs() < 1e-12);
        let f = desired_force(&zero(), &id, 0.5, &g, false);
        assert!((f.x - 0.65).abs() < 1e-12);
        // printed gravity sign would demand negative lift; the floor holds it at 10 % of weight
        let f = desired_force(&zero(), &id, 0.0, &g, true);
        assert!((f.z - 0.1 * 1.3 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn thrust_examples() {
        let f = Vector3::new(0.0, 0.0, 12.753);
        assert!((thrust(&f, &Rotation::identity()) - 12.753).abs() < 1e-12);
        assert_eq!(thrust(&f, &Rotation::about_x(PI / 2.0)), 0.0f64.max((Rotation::about_x(PI / 2.0).matrix().transpose() * f).z));
        assert!(thrust(&f, &Rotation::about_x(PI / 2.0)) < 1e-12);
        assert_eq!(thrust(&f, &Rotation::about_x(PI)), 0.0);
    }

    #[test]
    fn yaw_examples() {
        let g = ControllerGains::default();
        assert_eq!(desired_yaw(0.4, 0.0, 0.0, &g, 0.01), 0.4);
        assert!((desired_yaw(0.0, 100.0, 0.0, &g, 0.01) - 0.095).abs() < 1e-15);
        let gy = ControllerGains { kp_yaw: 1.0, ..g };
        let wrapped = desired_yaw(PI - 0.001, 1.0, 0.0, &gy, 0.01);
        assert!((wrapped - (-PI + 0.009)).abs() < 1e-12);
    }

    #[test]
    fn hover_equilibrium() {
        let g = ControllerGains::default();
        let id = Rotation::identity();
        let f = desired_force(&zero(), &id, 0.0, &g, false);
        assert!((thrust(&f, &id) - 1.3 * 9.81).abs() < 1e-9);
        let rd = desired_rotation(&f, desired_yaw(0.0, 0.0, 0.0, &g, 0.01)).unwrap();
        assert!((rd.matrix() - nalgebra::Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn desired_rotation_examples() {
        let rd = desired_rotation(&Vector3::new(0.0, 0.0, 1.0), 0.0).unwrap();
        assert!((rd.column(2) - Vector3::z()).norm() < 1e-15);
        assert!((rd.column(0) - Vector3::x()).norm() < 1e-15);
        assert!((rd.matrix().determinant() - 1.0).abs() < 1e-12);

        let a = 10f64.to_radians();
        let rd = desired_rotation(&Vector3::new(a.sin(), 0.0, a.cos()), 0.0).unwrap();
        assert!((rd.column(2) - Vector3::new(a.sin(), 0.0, a.cos())).norm() < 1e-15);
        let m = rd.matrix();
        for i in 0..3 {
            for j in 0..3 {
                let d = m.column(i).dot(&m.column(j));
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(matches!(desired_rotation(&Vector3::zeros(), 0.0), Err(ControlError::DegenerateForce(_))));
        assert!(matches!(desired_rotation(&Vector3::new(1.0, 0.0, 0.0), 0.0), Err(ControlError::DegenerateHeading)));
    }

    #[test]
    fn controller_holds_hover_without_target() {
        let mut c = VisualController::new(ControllerConfig::default(), CameraModel::default()).unwrap();
        let out = c.tick(0.0, None, &Rotation::identity(), 0.01).unwrap();
        assert!((out.command.thrust - 1.3 * 9.81).abs() < 1e-9);
        assert_eq!(out.pitch_accel, 0.0);
    }

    #[test]
    fn steady_state_is_rate_agnostic() {
        let cam = CameraModel::default();
        let target = PixelPoint::new(430.0, 300.0);
        let run = |hz: f64| {
            let mut c = VisualController::new(ControllerConfig::default(), cam).unwrap();
            let dt = 1.0 / hz;
            let mut out = None;
            for k in 0..(3.0 * hz) as usize {
                out = Some(c.tick(k as f64 * dt, Some(&target), &Rotation::identity(), dt).unwrap());
            }
            out.unwrap()
        };
        let (a, b) = (run(100.0), run(200.0));
        assert!((a.command.thrust - b.command.thrust).abs() <= 0.01 * a.command.thrust.abs());
        assert!((a.command.force - b.command.force).norm() <= 0.01 * a.command.force.norm());
        assert!((a.errors.de_w - b.errors.de_w).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn desired_rotation_is_orthonormal(fx in -20.0..20.0f64, fy in -20.0..20.0f64, fz in 0.5..30.0f64, yaw in -PI..PI) {
            let rd = desired_rotation(&Vector3::new(fx, fy, fz), yaw).unwrap();
            prop_assert!(rd.orthonormality_error() < 1e-9);
            prop_assert!((rd.matrix().determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn thrust_is_projection(fx in -20.0..20.0f64, fy in -20.0..20.0f64, fz in -5.0..30.0f64, yaw in -3.0..3.0f64, pitch in -1.4..1.4f64, roll in -3.0..3.0f64) {
            let r = Rotation::from_zyx(yaw, pitch, roll);
            let f = Vector3::new(fx, fy, fz);
            let t = thrust(&f, &r);
            prop_assert!(t >= 0.0);
            let cos = r.column(2).dot(&f) / f.norm();
            if cos > 0.0 {
                prop_assert!((t - f.norm() * cos).abs() < 1e-9);
            } else {
                prop_assert_eq!(t, 0.0);
            }
        }

        #[test]
        fn setpoint_monotone_in_pitch(a in -0.52..0.52f64, b in -0.52..0.52f64) {
            let cam = CameraModel::default();
            prop_assume!(a < b);
            prop_assert!(setpoints(&cam, a, false).sy > setpoints(&cam, b, false).sy);
        }
    }
}
