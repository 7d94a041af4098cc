//! Incremental fixed-capacity coreset and the static baseline samplers.

mod bank;
mod samplers;

use std::collections::BTreeMap;

use thiserror::Error;

pub use bank::{MemoryBank, StepKind, UpdateStats, UpdateStep, DEFAULT_CAPACITY};
pub use samplers::{covering_radius, greedy_kcenter, random_sample, EmbeddingPool};

use crate::distance::DistanceError;
use crate::tensor_io::MemoryBankSnapshot;

#[derive(Debug, Error)]
pub enum CoresetError {
    #[error("dimension mismatch: bank has {bank}, batch has {batch}")]
    DimensionMismatch { bank: usize, batch: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid capacity {0}")]
    InvalidCapacity(usize),
    #[error("cannot select {k} points from a pool of {pool}")]
    KExceedsPool { k: usize, pool: usize },
    #[error("seed index {seed} outside pool of {pool}")]
    SeedOutOfRange { seed: usize, pool: usize },
    #[error("{provenance} provenance entries for {rows} rows")]
    ProvenanceMismatch { rows: usize, provenance: usize },
    #[error("bank is empty")]
    EmptyBank,
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

impl CoresetError {
    pub fn kind(&self) -> &'static str {
        match self {
            CoresetError::DimensionMismatch { .. } => "dimension-mismatch",
            CoresetError::EmptyBatch => "empty-batch",
            CoresetError::InvalidCapacity(_) => "capacity-misconfiguration",
            CoresetError::KExceedsPool { .. } => "k-exceeds-pool",
            CoresetError::SeedOutOfRange { .. } => "seed-out-of-range",
            CoresetError::ProvenanceMismatch { .. } => "corrupt-payload",
            CoresetError::EmptyBank => "empty-bank",
            CoresetError::Distance(e) => e.kind(),
        }
    }
}

/// A bank snapshot together with the number of elements contributed by each task.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetExport {
    pub snapshot: MemoryBankSnapshot,
    pub task_counts: BTreeMap<String, usize>,
}

impl CoresetExport {
    /// Histogram as pretty JSON (`{"task": count, ...}`), keys sorted.
    pub fn counts_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.task_counts).expect("map serializes");
        s.push('\n');
        s
    }
}

pub fn task_counts(bank: &MemoryBank) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for p in bank.provenance() {
        *counts.entry(p.task_id.clone()).or_insert(0) += 1;
    }
    counts
}

pub fn export_coreset(bank: &MemoryBank) -> CoresetExport {
    CoresetExport { snapshot: bank.snapshot(), task_counts: task_counts(bank) }
}
