use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::dynamics::QuadState;
use crate::geometry::Rotation;

/// Gyroscope reading expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroSample {
    pub timestamp: f64,
    pub omega: Vector3<f64>,
}

/// Camera-from-body rotation of a camera looking along body x, image x to the
/// body's right and image y down.
pub fn forward_camera_mount() -> Rotation {
    Rotation::from_rows([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]).expect("mount is a rotation")
}

/// Samples the body rate in the camera frame with additive white noise.
pub fn imu_sample<R: Rng + ?Sized>(q: &QuadState, mount: &Rotation, sigma: f64, rng: &mut R, timestamp: f64) -> GyroSample {
    let mut omega = mount.apply(&q.omega);
    if sigma > 0.0 {
        for c in omega.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *c += sigma * n;
        }
    }
    GyroSample { timestamp, omega }
}
