//! Tracker-only replay of a recorded detection log.

use std::io::BufRead;

use crate::detection::log::{replay, LogEvent};
use crate::geometry::PixelPoint;
use crate::tracker::{Tracker, TrackerConfig, TrackerTraceRecord};

use super::HarnessError;

/// Feeds a log through a fresh tracker. The tracker locks onto the detection
/// nearest `prompt` in the first non-empty frame; the memory is refreshed with
/// each accepted detection's own descriptor.
pub fn track_log<R: BufRead>(source: R, prompt: PixelPoint, cfg: TrackerConfig) -> Result<Vec<TrackerTraceRecord>, HarnessError> {
    let mut tracker = Tracker::new(cfg)?;
    let mut out = Vec::new();
    for event in replay(source) {
        match event? {
            LogEvent::Gyro(g) => {
                tracker.propagate(&g)?;
            }
            LogEvent::Detections(dets) if tracker.is_initialized() => {
                let o = tracker.step(&dets, |d| d.descriptor.clone())?;
                out.push(TrackerTraceRecord::from_outcome(&o, tracker.state().expect("initialized")));
            }
            LogEvent::Detections(dets) if !dets.is_empty() => {
                let state = tracker.initialize(&prompt, &dets)?;
                out.push(TrackerTraceRecord::initial(dets.timestamp, state));
            }
            LogEvent::Detections(_) => {}
        }
    }
    Ok(out)
}
