//! Tracker weight ablation over a scenario.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{compute_metrics, Metrics, MetricsError};
use crate::sim::{run, Scenario, SimError};
use crate::tracker::TrackerWeights;

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    /// `(λ_IOU, λ_EKF, λ_MAP)` per row.
    pub rows: Vec<[f64; 3]>,
    #[serde(default = "one")]
    pub repetitions: u32,
    /// Seed offset per repetition; defaults to `0, 1, 2, …`.
    #[serde(default)]
    pub seed_offsets: Option<Vec<u64>>,
}

impl AblationSpec {
    /// The four weight rows of the reference tracker ablation.
    pub fn table2() -> Self {
        Self { rows: vec![[3.0, 0.0, 0.0], [3.0, 3.0, 0.0], [3.0, 0.0, 4.0], [3.0, 3.0, 4.0]], repetitions: 1, seed_offsets: None }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let spec: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rows.is_empty() {
            return Err("ablation needs at least one row".into());
        }
        if self.repetitions == 0 {
            return Err("repetitions must be at least 1".into());
        }
        for (i, r) in self.rows.iter().enumerate() {
            TrackerWeights::new(r[0], r[1], r[2]).map_err(|e| format!("row {}: {e}", i + 1))?;
        }
        if let Some(o) = &self.seed_offsets {
            if o.len() != self.repetitions as usize {
                return Err(format!("{} seed offsets given for {} repetitions", o.len(), self.repetitions));
            }
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<u64> {
        self.seed_offsets.clone().unwrap_or_else(|| (0..self.repetitions as u64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub weights: [f64; 3],
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub scenario: String,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("{0}")]
    Spec(String),
    #[error("row {row} (weights {weights:?}, seed {seed}): {source}")]
    Run { row: usize, weights: [f64; 3], seed: u64, source: SimError },
    #[error("row {row} (weights {weights:?}, seed {seed}): {source}")]
    Metrics { row: usize, weights: [f64; 3], seed: u64, source: MetricsError },
}

fn run_row(scenario: &Scenario, row: usize, weights: [f64; 3], seed: u64) -> Result<AblationRow, AblationError> {
    let mut sc = scenario.clone();
    sc.seed = seed;
    sc.tracker.weights = TrackerWeights { iou: weights[0], ekf: weights[1], map: weights[2] };
    let art = run(&sc).map_err(|source| AblationError::Run { row, weights, seed, source })?;
    let metrics = compute_metrics(&art.tracker, &art.ground_truth, &sc.metrics).map_err(|source| AblationError::Metrics { row, weights, seed, source })?;
    Ok(AblationRow { weights, seed, metrics })
}

/// Runs every `(row, repetition)` pair. Rows keep spec order, repetitions
/// follow each row, whether or not the runs execute in parallel.
pub fn run_ablation(scenario: &Scenario, spec: &AblationSpec, parallel: bool) -> Result<AblationTable, AblationError> {
    spec.validate().map_err(AblationError::Spec)?;
    let jobs: Vec<(usize, [f64; 3], u64)> = spec
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, w)| spec.offsets().into_iter().map(move |o| (i + 1, *w, o)))
        .map(|(i, w, o)| (i, w, scenario.seed.wrapping_add(o)))
        .collect();
    let rows: Result<Vec<_>, _> = if parallel {
        jobs.par_iter().map(|&(i, w, s)| run_row(scenario, i, w, s)).collect()
    } else {
        jobs.iter().map(|&(i, w, s)| run_row(scenario, i, w, s)).collect()
    };
    Ok(AblationTable { scenario: scenario.name.clone(), rows: rows? })
}

fn fmt_weight(w: f64) -> String {
    if w.fract() == 0.0 {
        format!("{w:.0}")
    } else {
        format!("{w}")
    }
}

/// Aligned plain-text table.
pub fn format_table(table: &AblationTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", table.scenario);
    let _ = writeln!(out, "{:>6} {:>6} {:>6} {:>8} {:>8} {:>9} {:>9}", "λ_IOU", "λ_EKF", "λ_MAP", "seed", "IOU %", "Overlap %", "Tracked %");
    for r in &table.rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>6} {:>8} {:>8.1} {:>9.1} {:>9.1}",
            fmt_weight(r.weights[0]),
            fmt_weight(r.weights[1]),
            fmt_weight(r.weights[2]),
            r.seed,
            m.iou_pct,
            m.overlap_pct,
            m.tracked_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(AblationSpec::table2().validate().is_ok());
        assert!(AblationSpec { rows: vec![], repetitions: 1, seed_offsets: None }.validate().is_err());
        assert!(AblationSpec { rows: vec![[0.0, 0.0, 0.0]], repetitions: 1, seed_offsets: None }.validate().is_err());
        assert!(AblationSpec { rows: vec![[1.0, 0.0, 0.0]], repetitions: 2, seed_offsets: Some(vec![0]) }.validate().is_err());
        assert!(AblationSpec::from_json(r#"{"rows": [[3, 3, 4]], "extra": 1}"#).is_err());
        let s = AblationSpec::from_json(r#"{"rows": [[3, 3, 4]], "repetitions": 3}"#).unwrap();
        assert_eq!(s.offsets(), vec![0, 1, 2]);
    }

    #[test]
    fn table_layout() {
        let m = Metrics { iou_pct: 81.25, overlap_pct: 100.0, tracked_pct: 100.0, lock_lost_at: None, frames: 10, tracking_frames: 10 };
        let t = AblationTable { scenario: "demo".into(), rows: vec![AblationRow { weights: [3.0, 0.0, 0.5], seed: 7, metrics: m }] };
        let text = format_table(&t);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("0.5") && lines[2].contains("81.2") && lines[2].ends_with("100.0"));
    }
}
