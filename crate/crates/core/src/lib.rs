//! Monocular target tracking and image-based visual servoing for a quadrotor,
//! with a deterministic multi-rate simulator and evaluation harness.
//!
//! * [`geometry`]: boxes, pinhole camera, rotations.
//! * [`detection`]: synthetic detector and the detection/gyro log format.
//! * [`tracker`]: prompt initialization, EKF with gyro compensation, scoring.
//! * [`controller`]: pixel-error visual servoing down to rotor thrusts.
//! * [`sim`]: quadrotor plant, scene, sensors and the event loop.
//! * [`harness`]: scenario corpus, metrics, ablations and run output.

pub mod controller;
pub mod detection;
pub mod geometry;
pub mod harness;
pub mod sim;
pub mod tracker;

pub use controller::{ControllerConfig, VisualController};
pub use detection::{Detection, DetectionSet, FeatureDescriptor, SyntheticDetector, SyntheticDetectorConfig};
pub use geometry::{iou, BoundingBox, CameraModel, PixelPoint, Rotation};
pub use harness::{compute_metrics, run_ablation, AblationSpec, Metrics};
pub use sim::{run, GyroSample, RunArtifacts, Scenario};
pub use tracker::{Tracker, TrackerConfig, TrackerWeights};
