//! Rotation-error PD attitude loop on SO(3).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::geometry::{vee, Rotation};

fn d_kr() -> [f64; 3] {
    [2.0, 2.0, 0.8]
}
fn d_kw() -> [f64; 3] {
    [0.3, 0.3, 0.15]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeGains {
    #[serde(default = "d_kr")]
    pub k_r: [f64; 3],
    #[serde(default = "d_kw")]
    pub k_w: [f64; 3],
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self { k_r: d_kr(), k_w: d_kw() }
    }
}

impl AttitudeGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.k_r.iter().chain(&self.k_w).any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(ControlError::Config("attitude gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// Attitude error `e_R = ½ (R_dᵀR − RᵀR_d)^∨`.
pub fn rotation_error(r: &Rotation, r_d: &Rotation) -> Vector3<f64> {
    let (m, md) = (r.matrix(), r_d.matrix());
    0.5 * vee(&(md.transpose() * m - m.transpose() * md))
}

/// Body torque `−k_R∘e_R − k_ω∘ω + ω × Jω` (desired body rate is zero).
pub fn attitude_control(r: &Rotation, omega: &Vector3<f64>, r_d: &Rotation, gains: &AttitudeGains, inertia: &Matrix3<f64>) -> Vector3<f64> {
    let e_r = rotation_error(r, r_d);
    let kr = Vector3::from(gains.k_r);
    let kw = Vector3::from(gains.k_w);
    -kr.component_mul(&e_r) - kw.component_mul(omega) + omega.cross(&(inertia * omega))
}
