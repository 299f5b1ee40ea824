//! Rigid-body quadrotor plant.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::controller::{MixerGeometry, MotorCommand};
use crate::geometry::Rotation;

pub const GRAVITY: f64 = 9.81;

fn d_mass() -> f64 {
    1.3
}
fn d_inertia() -> [f64; 3] {
    [0.01, 0.01, 0.02]
}

/// Physical parameters. The defaults describe a generic 1.3 kg quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    #[serde(default = "d_mass")]
    pub mass: f64,
    /// Diagonal of the body inertia, kg·m².
    #[serde(default = "d_inertia")]
    pub inertia: [f64; 3],
    #[serde(default)]
    pub mixer: MixerGeometry,
    /// First-order rotor lag time constant, seconds. Absent means ideal motors.
    #[serde(default)]
    pub motor_time_constant: Option<f64>,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self { mass: d_mass(), inertia: d_inertia(), mixer: MixerGeometry::default(), motor_time_constant: None }
    }
}

impl QuadParams {
    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(format!("mass {} must be positive", self.mass));
        }
        if self.inertia.iter().any(|j| !(j.is_finite() && *j > 0.0)) {
            return Err("inertia diagonal must be positive".into());
        }
        if let Some(tc) = self.motor_time_constant {
            if !(tc.is_finite() && tc > 0.0) {
                return Err(format!("motor_time_constant {tc} must be positive"));
            }
        }
        self.mixer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// World-from-body attitude.
    pub rotation: Rotation,
    /// Body-frame angular velocity.
    pub omega: Vector3<f64>,
}

impl QuadState {
    pub fn at_rest(position: Vector3<f64>, rotation: Rotation) -> Self {
        Self { position, velocity: Vector3::zeros(), rotation, omega: Vector3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).chain(self.omega.iter()).all(|v| v.is_finite())
            && self.rotation.matrix().iter().all(|v| v.is_finite())
    }
}

/// Collective thrust along body z and body torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyCommand {
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

impl BodyCommand {
    pub fn from_motors(cmd: &MotorCommand, geometry: &MixerGeometry) -> Self {
        let (thrust, torque) = geometry.wrench(&cmd.thrusts);
        Self { thrust, torque }
    }
}

#[derive(Clone, Copy)]
struct Deriv {
    p: Vector3<f64>,
    v: Vector3<f64>,
    r: Matrix3<f64>,
    w: Vector3<f64>,
}

fn derivative(v: &Vector3<f64>, r: &Matrix3<f64>, w: &Vector3<f64>, cmd: &BodyCommand, params: &QuadParams, j: &Matrix3<f64>, j_inv: &Matrix3<f64>) -> Deriv {
    let accel = r.column(2) * (cmd.thrust / params.mass) + Vector3::new(0.0, 0.0, -GRAVITY);
    let w_dot = j_inv * (cmd.torque - w.cross(&(j * w)));
    Deriv { p: *v, v: accel, r: r * crate::geometry::hat(w), w: w_dot }
}

/// Advances the plant by `dt` with RK4 and projects the attitude back onto SO(3).
pub fn dynamics_step(q: &QuadState, cmd: &BodyCommand, params: &QuadParams, dt: f64) -> Result<QuadState, SimError> {
    if !(cmd.thrust.is_finite() && cmd.torque.iter().all(|v| v.is_finite())) {
        return Err(SimError::NonFiniteCommand);
    }
    let j = params.inertia_matrix();
    let j_inv = Matrix3::from_diagonal(&Vector3::from(params.inertia).map(|v| 1.0 / v));
    let r0 = *q.rotation.matrix();
    let f = |v: &Vector3<f64>, r: &Matrix3<f64>, w: &Vector3<f64>| derivative(v, r, w, cmd, params, &j, &j_inv);

    let k1 = f(&q.velocity, &r0, &q.omega);
    let k2 = f(&(q.velocity + k1.v * (dt / 2.0)), &(r0 + k1.r * (dt / 2.0)), &(q.omega + k1.w * (dt / 2.0)));
    let k3 = f(&(q.velocity + k2.v * (dt / 2.0)), &(r0 + k2.r * (dt / 2.0)), &(q.omega + k2.w * (dt / 2.0)));
    let k4 = f(&(q.velocity + k3.v * dt), &(r0 + k3.r * dt), &(q.omega + k3.w * dt));
    let combine = |a: Vector3<f64>, b, c, d| (a + b * 2.0 + c * 2.0 + d) * (dt / 6.0);

    let position = q.position + combine(k1.p, k2.p, k3.p, k4.p);
    let velocity = q.velocity + combine(k1.v, k2.v, k3.v, k4.v);
    let omega = q.omega + combine(k1.w, k2.w, k3.w, k4.w);
    let r = r0 + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * (dt / 6.0);
    let next = QuadState { position, velocity, rotation: Rotation::project(&r), omega };
    if !next.is_finite() {
        return Err(SimError::NonFiniteState { t: f64::NAN });
    }
    Ok(next)
}

/// Plant with rotor states, holding the last motor command between control ticks.
#[derive(Debug, Clone)]
pub struct Plant {
    pub state: QuadState,
    pub params: QuadParams,
    rotors: [f64; 4],
    command: [f64; 4],
}

impl Plant {
    pub fn new(state: QuadState, params: QuadParams) -> Self {
        Self { state, params, rotors: [0.0; 4], command: [0.0; 4] }
    }

    /// Starts with every rotor at the hover share of the weight.
    pub fn hovering(state: QuadState, params: QuadParams) -> Self {
        let share = params.mass * GRAVITY / 4.0;
        Self { state, params, rotors: [share; 4], command: [share; 4] }
    }

    pub fn set_command(&mut self, cmd: &MotorCommand) {
        self.command = cmd.thrusts;
    }

    pub fn rotors(&self) -> [f64; 4] {
        self.rotors
    }

    pub fn step(&mut self, dt: f64) -> Result<(), SimError> {
        let max = self.params.mixer.max_rotor_thrust;
        match self.params.motor_time_constant {
            Some(tc) => {
                let a = 1.0 - (-dt / tc).exp();
                for (r, c) in self.rotors.iter_mut().zip(self.command) {
                    *r += a * (c.clamp(0.0, max) - *r);
                }
            }
            None => self.rotors = self.command.map(|c| c.clamp(0.0, max)),
        }
        let cmd = BodyCommand::from_motors(&MotorCommand { thrusts: self.rotors, saturated: false }, &self.params.mixer);
        self.state = dynamics_step(&self.state, &cmd, &self.params, dt)?;
        Ok(())
    }
}
