//! Bounding-box EKF with a constant pixel-velocity model and gyroscope
//! compensation.
//!
//! State `[x, y, w, h, ẋ, ẏ]` with `(x, y)` the top-left corner. Camera rotation
//! adds the rotational optical flow of the box center to the corner velocity:
//!
//! ```text
//! u̇_rot = f (x_n y_n ω_x − (1 + x_n²) ω_y + y_n ω_z)
//! v̇_rot = f ((1 + y_n²) ω_x − x_n y_n ω_y − x_n ω_z)
//! ```
//!
//! with `(x_n, y_n)` the normalized coordinates of the box center and `ω` the
//! camera-frame angular velocity.

use nalgebra::{Matrix4, SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::TrackerError;
use crate::geometry::{BoundingBox, CameraModel, PixelPoint};
use crate::sim::GyroSample;

pub type StateVector = SVector<f64, 6>;
pub type StateMatrix = SMatrix<f64, 6, 6>;
type MeasurementMatrix = SMatrix<f64, 4, 6>;

/// Smallest width/height the filter mean is allowed to reach, pixels.
pub const MIN_SIZE: f64 = 1.0;
/// Longest prediction interval accepted without flagging the gyro as stale.
pub const MAX_GYRO_GAP: f64 = 0.1;
const MAX_CONDITION: f64 = 1e12;

fn default_q() -> [f64; 6] {
    [0.01, 0.01, 0.01, 0.01, 0.1, 0.1]
}
fn default_r() -> [f64; 4] {
    [0.5; 4]
}
fn default_p0() -> [f64; 6] {
    [10.0, 10.0, 10.0, 10.0, 100.0, 100.0]
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkfConfig {
    /// Diagonal process noise, per second.
    #[serde(default = "default_q")]
    pub q: [f64; 6],
    /// Diagonal measurement noise, px².
    #[serde(default = "default_r")]
    pub r: [f64; 4],
    /// Diagonal initial covariance.
    #[serde(default = "default_p0")]
    pub p0: [f64; 6],
    #[serde(default = "yes")]
    pub gyro_compensation: bool,
    /// Intrinsics used for the rotational flow; supplied by the scenario.
    #[serde(skip)]
    pub camera: CameraModel,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self { q: default_q(), r: default_r(), p0: default_p0(), gyro_compensation: true, camera: CameraModel::default() }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = self.q.iter().chain(&self.r).chain(&self.p0);
        if all.clone().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err("EKF noise diagonals must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub mean: StateVector,
    pub cov: StateMatrix,
    pub timestamp: f64,
}

impl EkfState {
    pub fn new(b: &BoundingBox, timestamp: f64, cfg: &EkfConfig) -> Self {
        Self {
            mean: StateVector::from([b.x, b.y, b.w, b.h, 0.0, 0.0]),
            cov: StateMatrix::from_diagonal(&StateVector::from(cfg.p0)),
            timestamp,
        }
    }

    /// The predicted target box, `b̂_target`.
    pub fn predicted_box(&self) -> BoundingBox {
        BoundingBox { x: self.mean[0], y: self.mean[1], w: self.mean[2].max(MIN_SIZE), h: self.mean[3].max(MIN_SIZE) }
    }
}

/// Result of a prediction; `stale` is set when the gyro gap exceeded [`MAX_GYRO_GAP`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub state: EkfState,
    pub stale: bool,
}

/// Rotational pixel flow at a pixel and its derivatives with respect to the
/// normalized coordinates: `(u̇, v̇, ∂u̇/∂x_n, ∂u̇/∂y_n, ∂v̇/∂x_n, ∂v̇/∂y_n)`.
pub fn rotational_flow(cam: &CameraModel, p: &PixelPoint, omega: &[f64; 3]) -> [f64; 6] {
    let f = cam.focal();
    let (xn, yn) = cam.normalize(p);
    let [wx, wy, wz] = *omega;
    [
        f * (xn * yn * wx - (1.0 + xn * xn) * wy + yn * wz),
        f * ((1.0 + yn * yn) * wx - xn * yn * wy - xn * wz),
        f * (yn * wx - 2.0 * xn * wy),
        f * (xn * wx + wz),
        f * (-yn * wy - wz),
        f * (2.0 * yn * wx - xn * wy),
    ]
}

fn effective_omega(gyro: &GyroSample, cfg: &EkfConfig) -> [f64; 3] {
    if cfg.gyro_compensation {
        [gyro.omega.x, gyro.omega.y, gyro.omega.z]
    } else {
        [0.0; 3]
    }
}

/// Process model applied to a mean.
pub fn propagate_mean(x: &StateVector, omega: &[f64; 3], dt: f64, cam: &CameraModel) -> StateVector {
    let center = PixelPoint::new(x[0] + 0.5 * x[2], x[1] + 0.5 * x[3]);
    let flow = rotational_flow(cam, &center, omega);
    let mut out = *x;
    out[0] += (x[4] + flow[0]) * dt;
    out[1] += (x[5] + flow[1]) * dt;
    out
}

/// Analytic Jacobian of [`propagate_mean`] with respect to the state.
pub fn process_jacobian(x: &StateVector, omega: &[f64; 3], dt: f64, cam: &CameraModel) -> StateMatrix {
    let center = PixelPoint::new(x[0] + 0.5 * x[2], x[1] + 0.5 * x[3]);
    let [_, _, du_dxn, du_dyn, dv_dxn, dv_dyn] = rotational_flow(cam, &center, omega);
    // x_n = (x + w/2 - c_x) / f, so ∂x_n/∂x = 1/f and ∂x_n/∂w = 1/(2f).
    let inv_f = 1.0 / cam.focal();
    let (du_dx, du_dy) = (du_dxn * inv_f, du_dyn * inv_f);
    let (dv_dx, dv_dy) = (dv_dxn * inv_f, dv_dyn * inv_f);
    let mut jac = StateMatrix::identity();
    jac[(0, 0)] += dt * du_dx;
    jac[(0, 1)] += dt * du_dy;
    jac[(0, 2)] += dt * 0.5 * du_dx;
    jac[(0, 3)] += dt * 0.5 * du_dy;
    jac[(0, 4)] += dt;
    jac[(1, 0)] += dt * dv_dx;
    jac[(1, 1)] += dt * dv_dy;
    jac[(1, 2)] += dt * 0.5 * dv_dx;
    jac[(1, 3)] += dt * 0.5 * dv_dy;
    jac[(1, 5)] += dt;
    jac
}

/// Propagates the filter to the gyro sample's timestamp using its angular rate.
pub fn ekf_predict(s: &EkfState, gyro: &GyroSample, cfg: &EkfConfig) -> Result<Prediction, TrackerError> {
    let dt = gyro.timestamp - s.timestamp;
    if dt < 0.0 {
        return Err(TrackerError::TimeRegression { from: s.timestamp, to: gyro.timestamp });
    }
    let omega = effective_omega(gyro, cfg);
    let jac = process_jacobian(&s.mean, &omega, dt, &cfg.camera);
    let mut mean = propagate_mean(&s.mean, &omega, dt, &cfg.camera);
    mean[2] = mean[2].max(MIN_SIZE);
    mean[3] = mean[3].max(MIN_SIZE);
    let q = StateMatrix::from_diagonal(&StateVector::from(cfg.q)) * dt;
    let cov = symmetrize(&(jac * s.cov * jac.transpose() + q));
    Ok(Prediction { state: EkfState { mean, cov, timestamp: gyro.timestamp }, stale: dt > MAX_GYRO_GAP })
}

/// Kalman update with a box measurement (Joseph-form covariance).
pub fn ekf_update(s: &EkfState, z: &BoundingBox, cfg: &EkfConfig) -> Result<EkfState, TrackerError> {
    let mut h = MeasurementMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    let r = Matrix4::from_diagonal(&nalgebra::Vector4::from(cfg.r));
    let innovation = nalgebra::Vector4::from(z.as_array()) - h * s.mean;
    let s_mat = symmetrize4(&(h * s.cov * h.transpose() + r));

    let eig = SymmetricEigen::new(s_mat).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(TrackerError::FilterDegenerate { condition: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
    }
    let s_inv = s_mat.try_inverse().ok_or(TrackerError::FilterDegenerate { condition: f64::INFINITY })?;
    let gain = s.cov * h.transpose() * s_inv;

    let mut mean = s.mean + gain * innovation;
    mean[2] = mean[2].max(MIN_SIZE);
    mean[3] = mean[3].max(MIN_SIZE);
    let ikh = StateMatrix::identity() - gain * h;
    let cov = symmetrize(&(ikh * s.cov * ikh.transpose() + gain * r * gain.transpose()));
    Ok(EkfState { mean, cov, timestamp: s.timestamp })
}

fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

fn symmetrize4(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
