use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::metrics::{forgetting, mean, Forgetting, MetricKind, MetricMatrix};

/// One metric tracked across training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub kind: MetricKind,
    /// Evaluated stages as `(stage, a_{stage, 1..=stage})`, 1-based stages.
    pub history: Vec<(usize, Vec<f64>)>,
    pub final_values: Vec<f64>,
    pub average: f64,
    /// `None` with fewer than two stages or an incomplete history.
    pub forgetting: Option<Forgetting>,
}

impl MetricSeries {
    pub fn from_history(kind: MetricKind, history: Vec<(usize, Vec<f64>)>) -> Option<Self> {
        let (last_stage, final_values) = history.last().cloned()?;
        let complete = history.iter().enumerate().all(|(i, (stage, _))| *stage == i + 1);
        let forgetting = if complete && last_stage >= 2 {
            MetricMatrix::from_rows(kind, history.iter().map(|(_, r)| r.clone()).collect())
                .ok()
                .and_then(|m| forgetting(&m, last_stage).ok())
        } else {
            None
        };
        Some(Self { kind, average: mean(&final_values).unwrap_or(f64::NAN), final_values, history, forgetting })
    }

    pub fn fm(&self) -> Option<f64> {
        self.forgetting.as_ref().map(|f| f.fm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task_ids: Vec<String>,
    pub image: MetricSeries,
    pub pixel: Option<MetricSeries>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

impl MetricReport {
    /// Per-task table: one row per metric with the final values, the
    /// average and FM, followed by the per-stage history.
    pub fn render_table(&self) -> String {
        let width = self.task_ids.iter().map(String::len).max().unwrap_or(0).max(7);
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "metric");
        for t in &self.task_ids {
            let _ = write!(out, " {t:>width$}");
        }
        let _ = writeln!(out, " {:>width$} {:>width$}", "average", "FM");
        let series: Vec<&MetricSeries> = std::iter::once(&self.image).chain(self.pixel.as_ref()).collect();
        for s in &series {
            let _ = write!(out, "{:<8}", s.kind.label());
            for v in &s.final_values {
                let _ = write!(out, " {v:>width$.3}");
            }
            let _ = writeln!(out, " {:>width$.3} {:>width$}", s.average, fmt_opt(s.fm()));
        }
        if self.pixel.is_none() {
            let _ = writeln!(out, "{:<8} n/a (no pixel ground truth)", "P-AUPR");
        }
        for s in &series {
            let _ = writeln!(out, "\n{} by stage", s.kind.label());
            for (stage, row) in &s.history {
                let _ = write!(out, "{:<8}", format!("stage {stage}"));
                for v in row {
                    let _ = write!(out, " {v:>width$.3}");
                }
                let _ = writeln!(out);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Update counters for one training image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUpdate {
    pub source_id: String,
    pub inserted: usize,
    pub evicted: usize,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub task_id: String,
    pub updates: Vec<ImageUpdate>,
    pub image_row: Option<Vec<f64>>,
    pub pixel_row: Option<Vec<f64>>,
    pub bank_snapshot_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimePoint {
    pub image_index: usize,
    pub task_id: String,
    pub seconds: f64,
    pub task_start: bool,
    pub inserted: usize,
}

/// Per-image update time across all stages; the first image of each task is flagged.
pub fn emit_time_curve(records: &[StageRecord]) -> Vec<TimePoint> {
    let mut out = Vec::new();
    for r in records {
        for (i, u) in r.updates.iter().enumerate() {
            out.push(TimePoint {
                image_index: out.len(),
                task_id: r.task_id.clone(),
                seconds: u.seconds,
                task_start: i == 0,
                inserted: u.inserted,
            });
        }
    }
    out
}

pub fn time_curve_csv(points: &[TimePoint]) -> String {
    let mut s = String::from("image_index,task_id,seconds,task_start,inserted\n");
    for p in points {
        let _ = writeln!(s, "{},{},{:.9},{},{}", p.image_index, p.task_id, p.seconds, u8::from(p.task_start), p.inserted);
    }
    s
}
