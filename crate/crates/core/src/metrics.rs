//! Threshold-free detection metrics and the forgetting measure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {value} at {index} is not 0 or 1")]
    InvalidLabel { index: usize, value: u8 },
    #[error("non-finite score at {0}")]
    NonFiniteScore(usize),
    #[error("AUROC needs both classes ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("AUPR needs at least one positive")]
    NoPositives,
    #[error("forgetting needs at least 2 stages, got {0}")]
    InsufficientStages(usize),
    #[error("stage {stage} row has {found} entries, expected {expected}")]
    RowShape { stage: usize, expected: usize, found: usize },
    #[error("metric value {value} at stage {stage}, task {task} outside [0, 1]")]
    OutOfRange { stage: usize, task: usize, value: f64 },
}

impl MetricsError {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricsError::LengthMismatch { .. } => "length-mismatch",
            MetricsError::InvalidLabel { .. } => "invalid-label",
            MetricsError::NonFiniteScore(_) => "non-finite-score",
            MetricsError::SingleClass { .. } => "single-class-input",
            MetricsError::NoPositives => "no-positives",
            MetricsError::InsufficientStages(_) => "insufficient-stages",
            MetricsError::RowShape { .. } => "row-shape",
            MetricsError::OutOfRange { .. } => "out-of-range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    Image,
    Pixel,
}

/// Scores with binary ground truth (1 = anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
    kind: ScoreKind,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, kind: ScoreKind) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore(i));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(MetricsError::InvalidLabel { index: i, value: labels[i] });
        }
        Ok(Self { scores, labels, kind })
    }

    pub fn image(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, MetricsError> {
        Self::new(scores, labels, ScoreKind::Image)
    }

    pub fn pixel(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, MetricsError> {
        Self::new(scores, labels, ScoreKind::Pixel)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn extend(&mut self, other: &ScoredSet) {
        self.scores.extend_from_slice(&other.scores);
        self.labels.extend_from_slice(&other.labels);
    }

    fn order_by(&self, descending: bool) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_unstable_by(|&a, &b| {
            let o = self.scores[a].total_cmp(&self.scores[b]);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        idx
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic with average ranks
/// for ties.
pub fn auroc(set: &ScoredSet) -> Result<f64, MetricsError> {
    let positives = set.positives();
    let negatives = set.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass { positives, negatives });
    }
    let order = set.order_by(false);
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| set.labels[k] == 1).count();
        rank_sum += mean_rank * pos_in_group as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Area under the precision–recall curve as average precision: the sum of
/// `Δrecall × precision` over descending score cut points, with tied scores
/// entering together.
pub fn aupr(set: &ScoredSet) -> Result<f64, MetricsError> {
    let positives = set.positives();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let order = set.order_by(true);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            if set.labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Lower-triangular history `a[l][j]`: metric on task `j` after training stage `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    kind: MetricKind,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "I-AUROC")]
    ImageAuroc,
    #[serde(rename = "P-AUPR")]
    PixelAupr,
}

impl MetricKind {
    pub fn label(self) -> &'static str {
        match self {
            MetricKind::ImageAuroc => "I-AUROC",
            MetricKind::PixelAupr => "P-AUPR",
        }
    }
}

impl MetricMatrix {
    pub fn new(kind: MetricKind) -> Self {
        Self { kind, rows: Vec::new() }
    }

    /// Builds from complete rows; row `l` (0-based) must hold `l + 1` values.
    pub fn from_rows(kind: MetricKind, rows: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let mut m = Self::new(kind);
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<(), MetricsError> {
        let stage = self.rows.len();
        if row.len() != stage + 1 {
            return Err(MetricsError::RowShape { stage: stage + 1, expected: stage + 1, found: row.len() });
        }
        if let Some((task, &value)) = row.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::OutOfRange { stage: stage + 1, task: task + 1, value });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn stages(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }

    /// `a_{l,j}` with 1-based stage and task.
    pub fn get(&self, stage: usize, task: usize) -> Option<f64> {
        self.rows.get(stage.checked_sub(1)?)?.get(task.checked_sub(1)?).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forgetting {
    /// `f_j^k` for `j = 1..k−1`.
    pub per_task: Vec<f64>,
    pub fm: f64,
}

/// `f_j^k = max_{l<k} a_{l,j} − a_{k,j}` and their mean over `j < k`.
/// Negative values are kept.
pub fn forgetting(mm: &MetricMatrix, k: usize) -> Result<Forgetting, MetricsError> {
    if k < 2 || k > mm.stages() {
        return Err(MetricsError::InsufficientStages(k.min(mm.stages())));
    }
    let current = &mm.rows[k - 1];
    let per_task: Vec<f64> = (0..k - 1)
        .map(|j| {
            let best = mm.rows[j..k - 1].iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max);
            best - current[j]
        })
        .collect();
    let fm = per_task.iter().sum::<f64>() / (k - 1) as f64;
    Ok(Forgetting { per_task, fm })
}

/// Mean of a non-empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
