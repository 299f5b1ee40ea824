//! Per-run tracking metrics.
//!
//! A camera frame from the first lock onward counts as tracked when the tracker
//! accepted a box overlapping the ground-truth target by at least the IOU
//! threshold, or when it is coasting within the coast allowance and its
//! prediction still overlaps the target (or the target is not visible at all).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BoundingBox};
use crate::sim::GroundTruthRecord;
use crate::tracker::{TrackStatus, TrackerTraceRecord};

fn d_threshold() -> f64 {
    0.3
}
fn d_coast() -> u32 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "d_threshold")]
    pub iou_threshold: f64,
    /// Consecutive coasting frames credited as tracked.
    #[serde(default = "d_coast")]
    pub max_coast_frames: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { iou_threshold: d_threshold(), max_coast_frames: d_coast() }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(format!("iou_threshold {} outside (0, 1]", self.iou_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean IOU of accepted boxes against ground truth, percent.
    pub iou_pct: f64,
    /// Share of accepted boxes that intersect the ground truth, percent.
    pub overlap_pct: f64,
    /// Share of frames from first lock onward that count as tracked, percent.
    pub tracked_pct: f64,
    /// Time of the first frame that was not tracked.
    pub lock_lost_at: Option<f64>,
    pub frames: usize,
    pub tracking_frames: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty trace: {0}")]
    EmptyTrace(&'static str),
    #[error("tracker record at t = {0} has no ground-truth frame")]
    Misaligned(f64),
}

const TIME_EPS: f64 = 1e-9;

fn to_box(a: &[f64; 4]) -> BoundingBox {
    BoundingBox { x: a[0], y: a[1], w: a[2], h: a[3] }
}

/// Whether a single frame counts as tracked.
pub fn frame_tracked(record: Option<&TrackerTraceRecord>, gt: Option<&[f64; 4]>, cfg: &MetricsConfig) -> bool {
    let Some(r) = record else { return false };
    let gt = gt.map(to_box);
    match r.status {
        TrackStatus::Tracking => match (r.selected, gt) {
            (Some(sel), Some(g)) => iou(&to_box(&sel), &g) >= cfg.iou_threshold,
            _ => false,
        },
        TrackStatus::Coasting => {
            r.coast_frames <= cfg.max_coast_frames && gt.is_none_or(|g| iou(&to_box(&r.predicted), &g) >= cfg.iou_threshold)
        }
    }
}

/// Scores a tracker trace against the ground-truth trace of the same run.
///
/// Both traces are in time order; every tracker record must coincide with a
/// ground-truth frame.
pub fn compute_metrics(trace: &[TrackerTraceRecord], truth: &[GroundTruthRecord], cfg: &MetricsConfig) -> Result<Metrics, MetricsError> {
    let first = trace.first().ok_or(MetricsError::EmptyTrace("tracker"))?;
    if truth.is_empty() {
        return Err(MetricsError::EmptyTrace("ground truth"));
    }
    let start = truth.partition_point(|g| g.t < first.t - TIME_EPS);
    let frames = &truth[start..];
    if frames.is_empty() {
        return Err(MetricsError::Misaligned(first.t));
    }

    let mut next = 0;
    let (mut tracked, mut tracking, mut overlapping) = (0usize, 0usize, 0usize);
    let mut iou_sum = 0.0;
    let mut lost = None;
    for g in frames {
        if next < trace.len() && trace[next].t < g.t - TIME_EPS {
            return Err(MetricsError::Misaligned(trace[next].t));
        }
        let record = match trace.get(next) {
            Some(r) if (r.t - g.t).abs() <= TIME_EPS => {
                next += 1;
                Some(r)
            }
            _ => None,
        };
        if frame_tracked(record, g.target.as_ref(), cfg) {
            tracked += 1;
        } else if lost.is_none() {
            lost = Some(g.t);
        }
        if let Some(r) = record.filter(|r| r.status == TrackStatus::Tracking) {
            tracking += 1;
            let v = match (r.selected, g.target) {
                (Some(s), Some(t)) => iou(&to_box(&s), &to_box(&t)),
                _ => 0.0,
            };
            iou_sum += v;
            if v > 0.0 {
                overlapping += 1;
            }
        }
    }
    if next < trace.len() {
        return Err(MetricsError::Misaligned(trace[next].t));
    }
    let pct = |n: f64, d: usize| if d == 0 { 0.0 } else { 100.0 * n / d as f64 };
    Ok(Metrics {
        iou_pct: pct(iou_sum, tracking),
        overlap_pct: pct(overlapping as f64, tracking),
        tracked_pct: pct(tracked as f64, frames.len()),
        lock_lost_at: lost,
        frames: frames.len(),
        tracking_frames: tracking,
    })
}
