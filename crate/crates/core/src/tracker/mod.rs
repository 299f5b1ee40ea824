//! Single-target tracker: prompt-point initialization followed by per-frame
//! argmax selection over a weighted sum of spatial (IOU to the last target),
//! temporal (IOU to the EKF prediction) and appearance (cosine to memory) scores.

pub mod ekf;
pub mod memory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ekf::{ekf_predict, ekf_update, EkfConfig, EkfState, Prediction};
pub use memory::AppearanceMemory;

use crate::detection::{Detection, DetectionSet, FeatureDescriptor};
use crate::geometry::{iou, BoundingBox, PixelPoint};
use crate::sim::GyroSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("initialization failed: {0}")]
    InitializationFailure(String),
    #[error("tracker used before initialization")]
    Uninitialized,
    #[error("time regression: cannot predict from t = {from} back to t = {to}")]
    TimeRegression { from: f64, to: f64 },
    #[error("filter degenerate: innovation covariance condition number {condition:e}")]
    FilterDegenerate { condition: f64 },
    #[error("invalid tracker configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerWeights {
    pub iou: f64,
    pub ekf: f64,
    pub map: f64,
}

impl Default for TrackerWeights {
    fn default() -> Self {
        Self { iou: 3.0, ekf: 3.0, map: 4.0 }
    }
}

impl TrackerWeights {
    pub fn new(iou: f64, ekf: f64, map: f64) -> Result<Self, TrackerError> {
        let w = Self { iou, ekf, map };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let all = [self.iou, self.ekf, self.map];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.sum() <= 0.0 {
            return Err(TrackerError::Config(format!("weights {all:?} must be non-negative with a positive sum")));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.iou + self.ekf + self.map
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { iou: self.iou * c, ekf: self.ekf * c, map: self.map * c }
    }
}

fn default_alpha() -> f64 {
    0.9
}
fn default_acceptance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    #[serde(default)]
    pub weights: TrackerWeights,
    /// Memory blend factor.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub ekf: EkfConfig,
    /// Minimum accepted score as a fraction of the weight sum; 0 always accepts the best box.
    #[serde(default = "default_acceptance")]
    pub acceptance_fraction: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { weights: TrackerWeights::default(), alpha: default_alpha(), ekf: EkfConfig::default(), acceptance_fraction: default_acceptance() }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrackerError::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.acceptance_fraction >= 0.0 && self.acceptance_fraction.is_finite()) {
            return Err(TrackerError::Config("acceptance_fraction must be non-negative".into()));
        }
        self.ekf.validate().map_err(TrackerError::Config)
    }

    pub fn min_score(&self) -> f64 {
        self.acceptance_fraction * self.weights.sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tracking,
    Coasting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub iou: f64,
    pub ekf: f64,
    pub map: f64,
    pub total: f64,
}

/// Scores one detection against the previous target box, the EKF prediction and the memory.
pub fn score(det: &Detection, last_target: &BoundingBox, predicted: &BoundingBox, memory: &AppearanceMemory, w: &TrackerWeights) -> Scores {
    let s_iou = iou(last_target, &det.bbox);
    let s_ekf = iou(predicted, &det.bbox);
    let s_map = memory.similarity(&det.descriptor);
    Scores { iou: s_iou, ekf: s_ekf, map: s_map, total: w.iou * s_iou + w.ekf * s_ekf + w.map * s_map }
}

/// Index of the box whose center is nearest the prompt; first index wins ties.
pub fn nearest_to_prompt(prompt: &PixelPoint, dets: &DetectionSet) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in dets.detections.iter().enumerate() {
        let dist = prompt.distance(&d.bbox.center());
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub ekf: EkfState,
    pub memory: AppearanceMemory,
    pub target: BoundingBox,
    pub status: TrackStatus,
    pub coast_frames: u32,
}

/// What happened on one detection frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub timestamp: f64,
    pub status: TrackStatus,
    /// Index into the frame's detections of the accepted box.
    pub selected: Option<usize>,
    pub selected_box: Option<BoundingBox>,
    /// Scores of the best-scoring box, accepted or not.
    pub best_scores: Option<Scores>,
    /// EKF prediction at the frame time, before the update.
    pub predicted: BoundingBox,
    pub coast_frames: u32,
    pub stale_gyro: bool,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    state: Option<TrackerState>,
    last_gyro: Option<GyroSample>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self { cfg, state: None, last_gyro: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    /// Locks onto the detection nearest the prompt point.
    pub fn initialize(&mut self, prompt: &PixelPoint, dets: &DetectionSet) -> Result<&TrackerState, TrackerError> {
        let idx = nearest_to_prompt(prompt, dets)
            .ok_or_else(|| TrackerError::InitializationFailure(format!("no detections at t = {}", dets.timestamp)))?;
        let det = &dets.detections[idx];
        let memory = AppearanceMemory::new(&det.descriptor, self.cfg.alpha)
            .ok_or_else(|| TrackerError::InitializationFailure("selected detection has a zero descriptor".into()))?;
        let state = TrackerState {
            ekf: EkfState::new(&det.bbox, dets.timestamp, &self.cfg.ekf),
            memory,
            target: det.bbox,
            status: TrackStatus::Tracking,
            coast_frames: 0,
        };
        Ok(self.state.insert(state))
    }

    /// Propagates the filter on a gyro sample and returns whether the gap was
    /// stale. Before initialization the sample is only remembered.
    pub fn propagate(&mut self, gyro: &GyroSample) -> Result<bool, TrackerError> {
        self.last_gyro = Some(gyro.clone());
        let Some(state) = self.state.as_mut() else { return Ok(false) };
        let p = ekf_predict(&state.ekf, gyro, &self.cfg.ekf)?;
        if p.stale {
            log::warn!("stale gyro: predicted across {:.3} s", gyro.timestamp - state.ekf.timestamp);
        }
        state.ekf = p.state;
        Ok(p.stale)
    }

    /// Current EKF prediction `b̂_target`.
    pub fn predicted_box(&self) -> Option<BoundingBox> {
        self.state.as_ref().map(|s| s.ekf.predicted_box())
    }

    /// Selects the target among a frame's detections.
    ///
    /// `target_feature` returns the appearance descriptor used to refresh the
    /// memory for the accepted detection.
    pub fn step<F>(&mut self, dets: &DetectionSet, mut target_feature: F) -> Result<StepOutcome, TrackerError>
    where
        F: FnMut(&Detection) -> FeatureDescriptor,
    {
        let cfg = &self.cfg;
        let state = self.state.as_mut().ok_or(TrackerError::Uninitialized)?;

        let mut stale = false;
        if dets.timestamp > state.ekf.timestamp {
            let omega = self.last_gyro.as_ref().map_or(nalgebra::Vector3::zeros(), |g| g.omega);
            let p = ekf_predict(&state.ekf, &GyroSample { timestamp: dets.timestamp, omega }, &cfg.ekf)?;
            stale = p.stale;
            state.ekf = p.state;
        } else if dets.timestamp < state.ekf.timestamp {
            return Err(TrackerError::TimeRegression { from: state.ekf.timestamp, to: dets.timestamp });
        }
        let predicted = state.ekf.predicted_box();

        let mut best: Option<(usize, Scores)> = None;
        for (i, det) in dets.detections.iter().enumerate() {
            let s = score(det, &state.target, &predicted, &state.memory, &cfg.weights);
            if best.is_none_or(|(_, b)| s.total > b.total) {
                best = Some((i, s));
            }
        }

        let min_score = cfg.min_score();
        let accepted = best.filter(|(_, s)| s.total >= min_score);
        match accepted {
            Some((i, _)) => {
                let det = &dets.detections[i];
                state.ekf = ekf_update(&state.ekf, &det.bbox, &cfg.ekf)?;
                let feature = target_feature(det);
                state.memory = state.memory.update(&feature);
                state.target = det.bbox;
                state.status = TrackStatus::Tracking;
                state.coast_frames = 0;
            }
            None => {
                state.status = TrackStatus::Coasting;
                state.coast_frames += 1;
            }
        }
        Ok(StepOutcome {
            timestamp: dets.timestamp,
            status: state.status,
            selected: accepted.map(|(i, _)| i),
            selected_box: accepted.map(|(i, _)| dets.detections[i].bbox),
            best_scores: best.map(|(_, s)| s),
            predicted,
            coast_frames: state.coast_frames,
            stale_gyro: stale,
        })
    }
}

/// Per-frame tracker log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerTraceRecord {
    pub t: f64,
    pub status: TrackStatus,
    pub selected: Option<[f64; 4]>,
    /// `[s_iou, s_ekf, s_map, s_target]` of the best-scoring box.
    pub scores: Option<[f64; 4]>,
    pub predicted: [f64; 4],
    pub ekf_mean: [f64; 6],
    pub memory_similarity: Option<f64>,
    pub coast_frames: u32,
}

impl TrackerTraceRecord {
    pub fn from_outcome(o: &StepOutcome, state: &TrackerState) -> Self {
        Self {
            t: o.timestamp,
            status: o.status,
            selected: o.selected_box.map(|b| b.as_array()),
            scores: o.best_scores.map(|s| [s.iou, s.ekf, s.map, s.total]),
            predicted: o.predicted.as_array(),
            ekf_mean: state.ekf.mean.into(),
            memory_similarity: o.best_scores.map(|s| s.map),
            coast_frames: o.coast_frames,
        }
    }

    /// Record for the initialization frame.
    pub fn initial(t: f64, state: &TrackerState) -> Self {
        Self {
            t,
            status: TrackStatus::Tracking,
            selected: Some(state.target.as_array()),
            scores: None,
            predicted: state.ekf.predicted_box().as_array(),
            ekf_mean: state.ekf.mean.into(),
            memory_similarity: Some(1.0),
            coast_frames: 0,
        }
    }
}
