//! Run directory layout.
//!
//! ```text
//! detections.jsonl    gyro samples and detection frames
//! tracker.jsonl       one record per camera frame after lock
//! commands.jsonl      one record per control tick
//! ground_truth.jsonl  one record per camera frame
//! summary.json        counts, metrics and the scenario hash
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{compute_metrics, Metrics, MetricsConfig};
use super::HarnessError;
use crate::detection::log;
use crate::sim::{EventCounts, RunArtifacts, Scenario, TrackerFailure};

pub const DETECTIONS: &str = "detections.jsonl";
pub const TRACKER: &str = "tracker.jsonl";
pub const COMMANDS: &str = "commands.jsonl";
pub const GROUND_TRUTH: &str = "ground_truth.jsonl";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the canonical scenario JSON.
    pub config_hash: String,
    pub counts: EventCounts,
    pub locked_at: Option<f64>,
    pub captured_at: Option<f64>,
    pub tracker_failure: Option<TrackerFailure>,
    pub metrics_config: MetricsConfig,
    pub metrics: Option<Metrics>,
    pub metrics_error: Option<String>,
}

pub fn config_hash(scenario: &Scenario) -> String {
    let canonical = serde_json::to_string(scenario).expect("scenario serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn summarize(scenario: &Scenario, art: &RunArtifacts) -> Summary {
    let metrics = compute_metrics(&art.tracker, &art.ground_truth, &scenario.metrics);
    Summary {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        config_hash: config_hash(scenario),
        counts: art.counts,
        locked_at: art.locked_at,
        captured_at: art.captured_at,
        tracker_failure: art.tracker_failure.clone(),
        metrics_config: scenario.metrics,
        metrics_error: metrics.as_ref().err().map(|e| e.to_string()),
        metrics: metrics.ok(),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| HarnessError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Format(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

/// Writes all artifacts of a run and returns its summary.
pub fn write_run(dir: &Path, scenario: &Scenario, art: &RunArtifacts) -> Result<Summary, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut det = BufWriter::new(fs::File::create(dir.join(DETECTIONS))?);
    log::record(&mut det, &art.detections).map_err(|e| HarnessError::Format(e.to_string()))?;
    det.flush()?;
    write_jsonl(&dir.join(TRACKER), &art.tracker)?;
    write_jsonl(&dir.join(COMMANDS), &art.commands)?;
    write_jsonl(&dir.join(GROUND_TRUTH), &art.ground_truth)?;
    let summary = summarize(scenario, art);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Format(e.to_string()))?;
    fs::write(dir.join(SUMMARY), text + "\n")?;
    Ok(summary)
}

/// Recomputes metrics from a run directory's traces.
pub fn metrics_from_dir(dir: &Path) -> Result<Metrics, HarnessError> {
    let cfg = match fs::read_to_string(dir.join(SUMMARY)) {
        Ok(text) => serde_json::from_str::<Summary>(&text).map_err(|e| HarnessError::Format(format!("{SUMMARY}: {e}")))?.metrics_config,
        Err(_) => MetricsConfig::default(),
    };
    let trace = read_jsonl(&dir.join(TRACKER))?;
    let truth = read_jsonl(&dir.join(GROUND_TRUTH))?;
    Ok(compute_metrics(&trace, &truth, &cfg)?)
}
