//! Scenario description consumed by the runner.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::dynamics::QuadParams;
use super::imu::forward_camera_mount;
use super::scene::SceneObject;
use super::SimError;
use crate::controller::ControllerConfig;
use crate::detection::SyntheticDetectorConfig;
use crate::geometry::{CameraModel, Rotation};
use crate::harness::metrics::MetricsConfig;
use crate::tracker::TrackerConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// ZYX Euler angles `[yaw, pitch, roll]`, radians.
    #[serde(default)]
    pub attitude: [f64; 3],
}

impl InitialState {
    pub fn rotation(&self) -> Rotation {
        Rotation::from_zyx(self.attitude[0], self.attitude[1], self.attitude[2])
    }
}

fn one() -> f64 {
    1.0
}

/// How the vehicle moves.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Flight {
    /// The controller output drives the simulated plant.
    #[default]
    ClosedLoop,
    /// The vehicle follows a kinematic script; the controller still runs and is
    /// logged but its commands are not applied.
    Scripted {
        #[serde(default)]
        velocity: [f64; 3],
        /// Constant yaw rate, rad/s.
        #[serde(default)]
        yaw_rate: f64,
        /// Time at which the constant yaw rate starts, seconds.
        #[serde(default)]
        yaw_start: f64,
        /// Duration of the linear spin-up from rest to `yaw_rate`, seconds.
        #[serde(default)]
        yaw_ramp: f64,
        /// Amplitude of an added sinusoidal yaw, radians.
        #[serde(default)]
        yaw_amplitude: f64,
        #[serde(default = "one")]
        yaw_period: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prompt {
    /// Earliest camera frame at which the prompt is consumed, seconds.
    #[serde(default)]
    pub time: f64,
    /// Prompt pixel. Absent means the ground-truth center of the target.
    #[serde(default)]
    pub point: Option<[f64; 2]>,
    /// When set, initialization waits for a frame with a detection center
    /// within this many pixels of the prompt.
    #[serde(default)]
    pub radius: Option<f64>,
}

fn d_physics() -> u32 {
    1000
}
fn d_control() -> u32 {
    100
}
fn d_camera() -> u32 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    #[serde(default = "d_physics")]
    pub physics: u32,
    #[serde(default = "d_control")]
    pub control: u32,
    #[serde(default = "d_camera")]
    pub camera: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self { physics: d_physics(), control: d_control(), camera: d_camera() }
    }
}

fn d_gyro_noise() -> f64 {
    0.005
}
fn d_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "d_schema")]
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub camera: CameraModel,
    /// Camera-from-body rotation rows; defaults to a forward-looking camera.
    #[serde(default)]
    pub camera_mount: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    pub quad: QuadParams,
    pub initial: InitialState,
    #[serde(default)]
    pub flight: Flight,
    pub objects: Vec<SceneObject>,
    /// Id of the object the prompt designates.
    pub target: u32,
    /// Detector settings; its seed is replaced by the scenario seed.
    #[serde(default)]
    pub detector: SyntheticDetectorConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub prompt: Prompt,
    #[serde(default)]
    pub rates: Rates,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Gyroscope noise standard deviation, rad/s.
    #[serde(default = "d_gyro_noise")]
    pub gyro_noise: f64,
    /// Stop once the horizontal distance to the target falls below this, metres.
    #[serde(default)]
    pub capture_distance: Option<f64>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn mount(&self) -> Result<Rotation, SimError> {
        match self.camera_mount {
            None => Ok(forward_camera_mount()),
            Some(rows) => Rotation::from_rows(rows).map_err(|e| SimError::Config(format!("camera_mount: {e}"))),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema));
        }
        let r = self.rates;
        if !(r.camera > 0 && r.control >= r.camera && r.physics >= r.control) {
            return bad(format!("rates must satisfy physics >= control >= camera > 0, got {}/{}/{}", r.physics, r.control, r.camera));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if !(self.gyro_noise.is_finite() && self.gyro_noise >= 0.0) {
            return bad("gyro_noise must be non-negative".into());
        }
        if self.detector.seed != 0 {
            return bad("detector.seed is derived from the scenario seed and must not be set".into());
        }
        if !self.objects.iter().any(|o| o.id == self.target && !o.occluder) {
            return bad(format!("target {} is not a detectable scene object", self.target));
        }
        if let Some(d) = self.capture_distance {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("capture_distance {d} must be positive"));
            }
        }
        if let Flight::Scripted { yaw_period, yaw_start, yaw_ramp, .. } = self.flight {
            if !(yaw_period.is_finite() && yaw_period > 0.0) {
                return bad("yaw_period must be positive".into());
            }
            if !(yaw_start.is_finite() && yaw_start >= 0.0) {
                return bad("yaw_start must be non-negative".into());
            }
            if !(yaw_ramp.is_finite() && yaw_ramp >= 0.0) {
                return bad("yaw_ramp must be non-negative".into());
            }
        }
        if let Some(rad) = self.prompt.radius {
            if !(rad > 0.0) {
                return bad("prompt radius must be positive".into());
            }
        }
        if Vector3::from(self.initial.position).iter().chain(&self.initial.attitude).any(|v| !v.is_finite()) {
            return bad("initial state must be finite".into());
        }
        self.mount()?;
        self.quad.validate().map_err(SimError::Config)?;
        self.detector.validate().map_err(SimError::Config)?;
        self.tracker.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.controller.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.metrics.validate().map_err(SimError::Config)?;
        super::scene::Scene::new(self.objects.clone(), self.seed, 1).map_err(SimError::Config)?;
        Ok(())
    }
}
