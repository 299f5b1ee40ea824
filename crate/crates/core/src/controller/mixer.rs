//! X-configuration quadrotor mixer.
//!
//! Rotors sit at ±45° and ±135° from body x (forward) at distance `arm_length`,
//! numbered front-left, back-left, back-right, front-right. Front-left and
//! back-right spin so their reaction torque is positive about body z.

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

fn d_arm() -> f64 {
    0.17
}
fn d_yaw_coeff() -> f64 {
    0.016
}
fn d_max_thrust() -> f64 {
    8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixerGeometry {
    #[serde(default = "d_arm")]
    pub arm_length: f64,
    /// Reaction torque per newton of rotor thrust, m.
    #[serde(default = "d_yaw_coeff")]
    pub yaw_coefficient: f64,
    #[serde(default = "d_max_thrust")]
    pub max_rotor_thrust: f64,
}

impl Default for MixerGeometry {
    fn default() -> Self {
        Self { arm_length: d_arm(), yaw_coefficient: d_yaw_coeff(), max_rotor_thrust: d_max_thrust() }
    }
}

impl MixerGeometry {
    pub fn validate(&self) -> Result<(), String> {
        if [self.arm_length, self.yaw_coefficient, self.max_rotor_thrust].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err("mixer geometry values must be positive".into());
        }
        Ok(())
    }

    /// Maps rotor thrusts to `[collective, τ_x, τ_y, τ_z]`.
    pub fn allocation(&self) -> Matrix4<f64> {
        let d = self.arm_length * std::f64::consts::FRAC_1_SQRT_2;
        let k = self.yaw_coefficient;
        // rotor positions (x, y) and spin signs
        let rotors = [(d, d, 1.0), (-d, d, -1.0), (-d, -d, 1.0), (d, -d, -1.0)];
        let mut a = Matrix4::zeros();
        for (i, (x, y, s)) in rotors.into_iter().enumerate() {
            a[(0, i)] = 1.0;
            a[(1, i)] = y;
            a[(2, i)] = -x;
            a[(3, i)] = s * k;
        }
        a
    }

    /// Collective thrust and body torque produced by rotor thrusts.
    pub fn wrench(&self, rotors: &[f64; 4]) -> (f64, Vector3<f64>) {
        let w = self.allocation() * Vector4::from(*rotors);
        (w[0], Vector3::new(w[1], w[2], w[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorCommand {
    pub thrusts: [f64; 4],
    /// Requested collective exceeded what the rotors can deliver.
    pub saturated: bool,
}

/// Solves the allocation for rotor thrusts in `[0, max]`.
///
/// Collective thrust has priority: on saturation the torque is scaled down
/// uniformly until every rotor fits.
pub fn mix(thrust: f64, torque: &Vector3<f64>, geometry: &MixerGeometry) -> MotorCommand {
    let max = geometry.max_rotor_thrust;
    let saturated = thrust > 4.0 * max;
    let collective = thrust.clamp(0.0, 4.0 * max);
    let inv = geometry.allocation().try_inverse().expect("X allocation is invertible");
    let base = collective / 4.0;
    let differential = inv * Vector4::new(0.0, torque.x, torque.y, torque.z);

    let mut scale: f64 = 1.0;
    for &d in differential.iter() {
        if d > 0.0 && base + d > max {
            scale = scale.min((max - base) / d);
        } else if d < 0.0 && base + d < 0.0 {
            scale = scale.min(base / -d);
        }
    }
    let scale = scale.clamp(0.0, 1.0);
    let mut thrusts = [0.0; 4];
    for (i, t) in thrusts.iter_mut().enumerate() {
        *t = (base + scale * differential[i]).clamp(0.0, max);
    }
    MotorCommand { thrusts, saturated }
}
