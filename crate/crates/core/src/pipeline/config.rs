//! Run configuration and its flat `key = value` file form.

use std::collections::HashSet;
use std::path::PathBuf;

use super::PipelineError;
use crate::coreset::DEFAULT_CAPACITY;
use crate::scoring::{ScoringConfig, DEFAULT_NEIGHBORS, DEFAULT_SIGMA};

pub const DEFAULT_BATCH_ROWS: usize = 784;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    /// Empty means "every task under `dataset_root`, alphabetically".
    pub task_order: Vec<String>,
    pub coreset_capacity: usize,
    pub neighbor_b: usize,
    pub smoothing_sigma: f32,
    pub batch_rows: usize,
    pub eval_every_stage: bool,
    pub rng_seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("."),
            task_order: Vec::new(),
            coreset_capacity: DEFAULT_CAPACITY,
            neighbor_b: DEFAULT_NEIGHBORS,
            smoothing_sigma: DEFAULT_SIGMA,
            batch_rows: DEFAULT_BATCH_ROWS,
            eval_every_stage: true,
            rng_seed: 0,
            output_dir: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "dataset_root",
    "task_order",
    "coreset_capacity",
    "neighbor_b",
    "smoothing_sigma",
    "batch_rows",
    "eval_every_stage",
    "rng_seed",
    "output_dir",
];

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment line. Unset keys keep defaults.
    pub fn from_kv_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
        }
        match key {
            "dataset_root" => self.dataset_root = PathBuf::from(value),
            "task_order" => {
                self.task_order = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "coreset_capacity" => self.coreset_capacity = num(key, value)?,
            "neighbor_b" => self.neighbor_b = num(key, value)?,
            "smoothing_sigma" => self.smoothing_sigma = num(key, value)?,
            "batch_rows" => self.batch_rows = num(key, value)?,
            "eval_every_stage" => self.eval_every_stage = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            "output_dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("dataset_root = {}\n", self.dataset_root.display()));
        s.push_str(&format!("task_order = {}\n", self.task_order.join(",")));
        s.push_str(&format!("coreset_capacity = {}\n", self.coreset_capacity));
        s.push_str(&format!("neighbor_b = {}\n", self.neighbor_b));
        s.push_str(&format!("smoothing_sigma = {}\n", self.smoothing_sigma));
        s.push_str(&format!("batch_rows = {}\n", self.batch_rows));
        s.push_str(&format!("eval_every_stage = {}\n", self.eval_every_stage));
        s.push_str(&format!("rng_seed = {}\n", self.rng_seed));
        if let Some(dir) = &self.output_dir {
            s.push_str(&format!("output_dir = {}\n", dir.display()));
        }
        s
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.coreset_capacity == 0 {
            return Err(PipelineError::CapacityMisconfiguration("coreset_capacity must be at least 1".into()));
        }
        if self.neighbor_b < 2 {
            return Err(PipelineError::Config(format!("neighbor_b = {} must be at least 2", self.neighbor_b)));
        }
        if self.coreset_capacity < self.neighbor_b {
            return Err(PipelineError::CapacityMisconfiguration(format!(
                "coreset_capacity {} is smaller than neighbor_b {}",
                self.coreset_capacity, self.neighbor_b
            )));
        }
        if !self.smoothing_sigma.is_finite() || self.smoothing_sigma < 0.0 {
            return Err(PipelineError::Config(format!("smoothing_sigma = {} must be >= 0", self.smoothing_sigma)));
        }
        if self.batch_rows == 0 {
            return Err(PipelineError::Config("batch_rows must be at least 1".into()));
        }
        if self.task_order.is_empty() {
            return Err(PipelineError::Config("task_order is empty".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.task_order.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(PipelineError::Config(format!("task {dup:?} appears twice in task_order")));
        }
        Ok(())
    }

    /// Fills an empty `task_order` from the dataset root (lexicographic).
    pub fn resolve_tasks(&mut self) -> Result<(), PipelineError> {
        if self.task_order.is_empty() {
            self.task_order = crate::tensor_io::discover_tasks(&self.dataset_root).map_err(PipelineError::Io)?;
        }
        Ok(())
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig { neighbors: self.neighbor_b, sigma: self.smoothing_sigma }
    }
}
