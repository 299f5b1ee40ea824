//! Image-plane boxes, the pinhole camera, rotations and projection.
//!
//! Frames: world is ENU (z up). Camera frame is z forward, x right, y down.
//! Rotations are world-from-body unless stated otherwise.

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum camera-frame depth for a point to be considered in front of the lens.
pub const MIN_DEPTH: f64 = 1e-6;

const ORTHO_TOL: f64 = 1e-9;
const GIMBAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("matrix is not a rotation (orthonormality error {0:e})")]
    NotARotation(f64),
    #[error("degenerate attitude: pitch {pitch} rad is at gimbal lock")]
    DegenerateAttitude { pitch: f64 },
}

/// Axis-aligned pixel box stored as top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox { x, y, w, h })
        }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite() && self.w > 0.0 && self.h > 0.0
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection with another box, if it has positive area.
    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BoundingBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Intersection over union of two boxes.
///
/// The intersection is computed from the sorted pair so that the result is
/// bit-for-bit symmetric in its arguments.
pub fn iou(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    let inter = b1.intersection_area(b2);
    if inter <= 0.0 {
        return 0.0;
    }
    let (a1, a2) = (b1.area(), b2.area());
    let union = if a1 <= a2 { a1 + a2 - inter } else { a2 + a1 - inter };
    if b1 == b2 {
        return 1.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

pub type WorldPoint = Vector3<f64>;

/// Pinhole intrinsics. The focal length is always derived from the image
/// height and vertical field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct CameraModel {
    width: f64,
    height: f64,
    vfov: f64,
    focal: f64,
    cx: f64,
    cy: f64,
}

/// Serialized form of [`CameraModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: f64,
    pub height: f64,
    pub vfov: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self { width: 960.0, height: 544.0, vfov: 1.047 }
    }
}

impl TryFrom<CameraSpec> for CameraModel {
    type Error = GeometryError;

    fn try_from(s: CameraSpec) -> Result<Self, Self::Error> {
        CameraModel::new(s.width, s.height, s.vfov)
    }
}

impl From<CameraModel> for CameraSpec {
    fn from(c: CameraModel) -> Self {
        CameraSpec { width: c.width, height: c.height, vfov: c.vfov }
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel::new(960.0, 544.0, 1.047).expect("default camera is valid")
    }
}

impl CameraModel {
    /// Camera with the principal point at the image center.
    pub fn new(width: f64, height: f64, vfov: f64) -> Result<Self, GeometryError> {
        if !(width.is_finite() && width > 0.0 && height.is_finite() && height > 0.0) {
            return Err(GeometryError::InvalidCamera(format!("image size {width}x{height} must be positive")));
        }
        if !(vfov > 0.0 && vfov < PI) {
            return Err(GeometryError::InvalidCamera(format!("vertical fov {vfov} must lie in (0, pi)")));
        }
        let focal = 0.5 * height / (0.5 * vfov).tan();
        Ok(Self { width, height, vfov, focal, cx: 0.5 * width, cy: 0.5 * height })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn vfov(&self) -> f64 {
        self.vfov
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    pub fn image_box(&self) -> BoundingBox {
        BoundingBox { x: 0.0, y: 0.0, w: self.width, h: self.height }
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u >= 0.0 && p.u <= self.width && p.v >= 0.0 && p.v <= self.height
    }

    /// Normalized image coordinates of a pixel.
    pub fn normalize(&self, p: &PixelPoint) -> (f64, f64) {
        ((p.u - self.cx) / self.focal, (p.v - self.cy) / self.focal)
    }
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix after checking `RᵀR = I` and `det R = 1`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let err = orthonormality_error(&m);
        if err > ORTHO_TOL || (m.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(GeometryError::NotARotation(err.max((m.determinant() - 1.0).abs())));
        }
        Ok(Self(m))
    }

    /// Nearest rotation (Frobenius norm) to an arbitrary matrix.
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut d = Matrix3::identity();
            d[(2, 2)] = -1.0;
            r = u * d * v_t;
        }
        Self(r)
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// `Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_zyx(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self(Self::about_z(yaw).0 * Self::about_y(pitch).0 * Self::about_x(roll).0)
    }

    /// Rotation by `angle` about the unit-or-zero axis `axis * angle` (Rodrigues).
    pub fn exp(rotvec: &Vector3<f64>) -> Self {
        let angle = rotvec.norm();
        if angle < 1e-300 {
            return Self::identity();
        }
        let k = rotvec / angle;
        let kx = hat(&k);
        Self(Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos()))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn column(&self, i: usize) -> Vector3<f64> {
        self.0.column(i).into_owned()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.0);
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(&rows.concat()))
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Rotation::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Skew-symmetric matrix such that `hat(a) * b = a × b`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] for a skew-symmetric matrix.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// ZYX Euler pitch and yaw of a world-from-body rotation.
pub fn pitch_yaw_from_rotation(r: &Rotation) -> Result<(f64, f64), GeometryError> {
    let m = r.matrix();
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    if (pitch.abs() - PI / 2.0).abs() < GIMBAL_TOL {
        return Err(GeometryError::DegenerateAttitude { pitch });
    }
    let yaw = wrap_angle(m[(1, 0)].atan2(m[(0, 0)]));
    Ok((pitch, yaw))
}

/// Camera placement in the world: world-from-camera rotation and optical center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Rotation,
    pub position: WorldPoint,
}

impl CameraPose {
    pub fn to_camera_frame(&self, p: &WorldPoint) -> Vector3<f64> {
        self.rotation.matrix().transpose() * (p - self.position)
    }
}

/// Pinhole projection; `None` when the point is not in front of the camera.
pub fn project_point(cam: &CameraModel, pose: &CameraPose, p: &WorldPoint) -> Option<PixelPoint> {
    project_camera_point(cam, &pose.to_camera_frame(p))
}

pub fn project_camera_point(cam: &CameraModel, pc: &Vector3<f64>) -> Option<PixelPoint> {
    if pc.z <= MIN_DEPTH {
        return None;
    }
    Some(PixelPoint::new(cam.focal * pc.x / pc.z + cam.cx, cam.focal * pc.y / pc.z + cam.cy))
}

/// World-aligned 3-D box given by center and full extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3 {
    pub center: WorldPoint,
    pub size: Vector3<f64>,
}

impl Aabb3 {
    pub fn corners(&self) -> [WorldPoint; 8] {
        let h = self.size * 0.5;
        let mut out = [self.center; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c += Vector3::new(sx * h.x, sy * h.y, sz * h.z);
        }
        out
    }
}

/// Pixel bound of a projected 3-D box. Not clamped to the image; `None` when any
/// corner is behind the camera or the result is under a pixel in either direction.
pub fn project_box(cam: &CameraModel, pose: &CameraPose, obj: &Aabb3) -> Option<BoundingBox> {
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in obj.corners() {
        let p = project_point(cam, pose, &c)?;
        u0 = u0.min(p.u);
        v0 = v0.min(p.v);
        u1 = u1.max(p.u);
        v1 = v1.max(p.v);
    }
    let (w, h) = (u1 - u0, v1 - v0);
    (w >= 1.0 && h >= 1.0).then_some(BoundingBox { x: u0, y: v0, w, h })
}
