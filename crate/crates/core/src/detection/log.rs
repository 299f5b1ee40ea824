//! Line-delimited detection/gyro log.
//!
//! One JSON object per line:
//!
//! ```text
//! {"t":0.0166666667,"kind":"det","boxes":[[x,y,w,h],...],"conf":[...],"desc":[[...],...]}
//! {"t":0.01,"kind":"gyro","w":[wx,wy,wz]}
//! ```
//!
//! Floats are written with 9 significant digits. Replay yields events in
//! timestamp order with gyro samples ahead of detections at equal timestamps.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use nalgebra::Vector3;
use serde::Deserialize;
use thiserror::Error;

use super::{Detection, DetectionSet, FeatureDescriptor};
use crate::geometry::BoundingBox;
use crate::sim::GyroSample;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} precedes previous timestamp {previous}")]
    StreamOrder { line: usize, t: f64, previous: f64 },
    #[error("event {index}: timestamp {t} precedes previous timestamp {previous}")]
    RecordOrder { index: usize, t: f64, previous: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogEvent {
    Gyro(GyroSample),
    Detections(DetectionSet),
}

impl LogEvent {
    pub fn timestamp(&self) -> f64 {
        match self {
            LogEvent::Gyro(g) => g.timestamp,
            LogEvent::Detections(d) => d.timestamp,
        }
    }

    fn order_key(&self) -> u8 {
        match self {
            LogEvent::Gyro(_) => 0,
            LogEvent::Detections(_) => 1,
        }
    }
}

/// Formats a float with 9 significant digits, trimming trailing zeros.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        // JSON has no encoding for these; the reader rejects the line.
        return "null".into();
    }
    let s = format!("{v:.8e}");
    let (mantissa, exponent) = s.split_once('e').expect("exponent form");
    let mantissa = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
    if exponent == "0" {
        mantissa.to_string()
    } else {
        format!("{mantissa}e{exponent}")
    }
}

fn push_list(out: &mut String, values: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_float(v));
    }
    out.push(']');
}

/// Serializes one event as a single log line (without the newline).
pub fn encode_event(event: &LogEvent) -> String {
    let mut out = String::new();
    match event {
        LogEvent::Gyro(g) => {
            let _ = write!(out, "{{\"t\":{},\"kind\":\"gyro\",\"w\":", format_float(g.timestamp));
            push_list(&mut out, g.omega.iter().copied());
        }
        LogEvent::Detections(d) => {
            let _ = write!(out, "{{\"t\":{},\"kind\":\"det\",\"boxes\":[", format_float(d.timestamp));
            for (i, det) in d.detections.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_list(&mut out, det.bbox.as_array());
            }
            out.push_str("],\"conf\":");
            push_list(&mut out, d.detections.iter().map(|det| det.confidence));
            out.push_str(",\"desc\":[");
            for (i, det) in d.detections.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_list(&mut out, det.descriptor.values().iter().copied());
            }
            out.push(']');
        }
    }
    out.push('}');
    out
}

/// Writes a stream of events; timestamps must be non-decreasing.
pub fn record<'a, W: Write>(sink: &mut W, events: impl IntoIterator<Item = &'a LogEvent>) -> Result<(), LogError> {
    let mut previous: Option<f64> = None;
    for (index, ev) in events.into_iter().enumerate() {
        let t = ev.timestamp();
        if let Some(p) = previous {
            if t < p {
                return Err(LogError::RecordOrder { index, t, previous: p });
            }
        }
        previous = Some(t);
        writeln!(sink, "{}", encode_event(ev))?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum RawEvent {
    #[serde(rename = "det")]
    Det { t: f64, boxes: Vec<[f64; 4]>, conf: Vec<f64>, desc: Vec<Vec<f64>> },
    #[serde(rename = "gyro")]
    Gyro { t: f64, w: [f64; 3] },
}

/// Parses a single log line.
pub fn decode_line(text: &str, line: usize) -> Result<LogEvent, LogError> {
    let parse_err = |message: String| LogError::Parse { line, message };
    let raw: RawEvent = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    match raw {
        RawEvent::Gyro { t, w } => {
            if !t.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(parse_err("non-finite gyro record".into()));
            }
            Ok(LogEvent::Gyro(GyroSample { timestamp: t, omega: Vector3::from(w) }))
        }
        RawEvent::Det { t, boxes, conf, desc } => {
            if !t.is_finite() {
                return Err(parse_err("non-finite timestamp".into()));
            }
            if boxes.len() != conf.len() || boxes.len() != desc.len() {
                return Err(parse_err(format!(
                    "boxes ({}), conf ({}) and desc ({}) lengths differ",
                    boxes.len(),
                    conf.len(),
                    desc.len()
                )));
            }
            if let Some(d0) = desc.first() {
                if desc.iter().any(|d| d.len() != d0.len()) {
                    return Err(parse_err("descriptors have differing dimensions".into()));
                }
            }
            let mut detections = Vec::with_capacity(boxes.len());
            for ((b, c), d) in boxes.into_iter().zip(conf).zip(desc) {
                let bbox = BoundingBox::new(b[0], b[1], b[2], b[3]).map_err(|e| parse_err(e.to_string()))?;
                detections.push(Detection { bbox, descriptor: FeatureDescriptor::new(d), confidence: c });
            }
            Ok(LogEvent::Detections(DetectionSet { timestamp: t, detections }))
        }
    }
}

/// Iterator over the events of a log, canonically ordered.
pub struct Replay<R> {
    lines: io::Lines<R>,
    line_no: usize,
    lookahead: Option<LogEvent>,
    pending: VecDeque<LogEvent>,
    last_t: Option<f64>,
    /// Error hit while reading ahead, reported after the events before it.
    deferred: Option<LogError>,
    failed: bool,
}

pub fn replay<R: BufRead>(source: R) -> Replay<R> {
    Replay { lines: source.lines(), line_no: 0, lookahead: None, pending: VecDeque::new(), last_t: None, deferred: None, failed: false }
}

impl<R: BufRead> Replay<R> {
    fn read_event(&mut self) -> Result<Option<LogEvent>, LogError> {
        loop {
            let Some(line) = self.lines.next() else { return Ok(None) };
            let line = line?;
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let ev = decode_line(&line, self.line_no)?;
            let t = ev.timestamp();
            if let Some(prev) = self.last_t {
                if t < prev {
                    return Err(LogError::StreamOrder { line: self.line_no, t, previous: prev });
                }
            }
            self.last_t = Some(t);
            return Ok(Some(ev));
        }
    }

    fn fill(&mut self) -> Result<(), LogError> {
        let first = match self.lookahead.take() {
            Some(ev) => ev,
            None => match self.read_event()? {
                Some(ev) => ev,
                None => return Ok(()),
            },
        };
        let t = first.timestamp();
        let mut group = vec![first];
        loop {
            match self.read_event() {
                Ok(Some(ev)) if ev.timestamp() == t => group.push(ev),
                Ok(Some(ev)) => {
                    self.lookahead = Some(ev);
                    break;
                }
                Ok(None) => break,
                Err(e) => {
                    self.deferred = Some(e);
                    break;
                }
            }
        }
        group.sort_by_key(LogEvent::order_key);
        self.pending.extend(group);
        Ok(())
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<LogEvent, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.pending.is_empty() {
            if let Some(e) = self.deferred.take() {
                self.failed = true;
                return Some(Err(e));
            }
            if let Err(e) = self.fill() {
                self.failed = true;
                return Some(Err(e));
            }
        }
        self.pending.pop_front().map(Ok)
    }
}
