//! Deterministic quadrotor, scene and sensor simulation.

pub mod dynamics;
pub mod imu;
pub mod runner;
pub mod scenario;
pub mod scene;

use thiserror::Error;

use crate::controller::ControlError;
use crate::tracker::TrackerError;

pub use dynamics::{dynamics_step, BodyCommand, Plant, QuadParams, QuadState, GRAVITY};
pub use imu::{forward_camera_mount, imu_sample, GyroSample};
pub use runner::{run, EventCounts, GroundTruthRecord, RunArtifacts, TrackerFailure};
pub use scenario::{Flight, InitialState, Prompt, Rates, Scenario, SCHEMA_VERSION};
pub use scene::{scene_step, MotionScript, Scene, SceneObject};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("non-finite motor command")]
    NonFiniteCommand,
    #[error("non-finite vehicle state; last good state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("tracker initialization failed at t = {t}: {source}")]
    Initialization { t: f64, source: TrackerError },
    #[error("controller failed at t = {t}: {source}")]
    Control { t: f64, source: ControlError },
}

impl SimError {
    /// Configuration problems as opposed to failures during a run.
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Config(_))
    }
}
