//! On-disk tensors, task dataset trees and memory-bank snapshots.

mod bank_file;
mod dataset;
mod tensor;

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bank_file::{load_bank, save_bank, sidecar_path, MemoryBankSnapshot, BANK_FORMAT_VERSION};
pub use dataset::{
    discover_tasks, load_task, load_task_parts, write_labels, write_task_config, TaskDataset,
    TaskParts, TestSample, DEFAULT_IMAGE_SIZE, LABELS_FILE, MASKS_DIR, TASK_CONFIG_FILE,
    TENSOR_EXT, TEST_DIR, TRAIN_DIR,
};
pub use tensor::{read_tensor, read_tensor_as, write_tensor, DType, TensorData, TensorFile, MAGIC};

fn show(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => "<memory>".to_string(),
    }
}

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("bad magic {found:?} in {} at byte {offset}", show(.path))]
    BadMagic { path: Option<PathBuf>, offset: u64, found: [u8; 4] },
    #[error("dtype mismatch in {} at byte {offset}: {detail}", show(.path))]
    DtypeMismatch { path: Option<PathBuf>, offset: u64, detail: String },
    #[error("size mismatch in {} at byte {offset}: expected {expected} bytes, found {actual}", show(.path))]
    SizeMismatch { path: Option<PathBuf>, offset: u64, expected: u64, actual: u64 },
    #[error("invalid shape in {} at byte {offset}: {detail}", show(.path))]
    InvalidShape { path: Option<PathBuf>, offset: u64, detail: String },
    #[error("non-finite value in {} at byte {offset}", show(.path))]
    NonFinite { path: Option<PathBuf>, offset: u64 },
    #[error("io failure on {} at byte {offset}: {source}", .path.display())]
    Io { path: PathBuf, offset: u64, #[source] source: std::io::Error },
    #[error("task {task}: missing {what} at {}", .path.display())]
    MissingSplit { task: String, what: String, path: PathBuf },
    #[error("task {task}: {labels} labels for {tensors} test tensors")]
    LabelCountMismatch { task: String, labels: usize, tensors: usize },
    #[error("invalid label {value:?} at {}:{line}", .path.display())]
    InvalidLabel { path: PathBuf, line: usize, value: String },
    #[error("mask {} has shape {found:?}, expected {expected:?}", .path.display())]
    MaskShapeMismatch { path: PathBuf, expected: (usize, usize), found: Vec<usize> },
    #[error("invalid task config {}: {detail}", .path.display())]
    InvalidTaskConfig { path: PathBuf, detail: String },
    #[error("invalid embedding batch: {0}")]
    InvalidBatch(String),
    #[error("unsupported bank format version {found} in {} (supported: {supported})", .path.display())]
    VersionUnsupported { path: PathBuf, found: u32, supported: u32 },
    #[error("corrupt bank payload {}: {detail}", .path.display())]
    CorruptPayload { path: PathBuf, detail: String },
}

impl TensorIoError {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            TensorIoError::BadMagic { .. } => "bad-magic",
            TensorIoError::DtypeMismatch { .. } => "dtype-mismatch",
            TensorIoError::SizeMismatch { .. } => "size-mismatch",
            TensorIoError::InvalidShape { .. } => "invalid-shape",
            TensorIoError::NonFinite { .. } => "non-finite",
            TensorIoError::Io { .. } => "io-failure",
            TensorIoError::MissingSplit { .. } => "missing-split",
            TensorIoError::LabelCountMismatch { .. } => "label-count-mismatch",
            TensorIoError::InvalidLabel { .. } => "invalid-label",
            TensorIoError::MaskShapeMismatch { .. } => "mask-shape-mismatch",
            TensorIoError::InvalidTaskConfig { .. } => "invalid-task-config",
            TensorIoError::InvalidBatch(_) => "invalid-batch",
            TensorIoError::VersionUnsupported { .. } => "version-unsupported",
            TensorIoError::CorruptPayload { .. } => "corrupt-payload",
        }
    }
}

/// Where a memory-bank element came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub task_id: String,
    pub source_id: String,
}

impl Provenance {
    pub fn new(task_id: impl Into<String>, source_id: impl Into<String>) -> Self {
        Self { task_id: task_id.into(), source_id: source_id.into() }
    }
}

/// Patch embeddings of one image (or an arbitrary set of rows).
///
/// When `grid` is `Some((h, w))`, row `i` is the patch at `(i / w, i % w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    embeddings: Array2<f32>,
    grid: Option<(usize, usize)>,
    source_id: String,
    task_id: String,
}

impl EmbeddingBatch {
    pub fn new(
        embeddings: Array2<f32>,
        grid: Option<(usize, usize)>,
        task_id: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Result<Self, TensorIoError> {
        if let Some((h, w)) = grid {
            if h * w != embeddings.nrows() {
                return Err(TensorIoError::InvalidBatch(format!(
                    "grid {h}x{w} does not match {} rows",
                    embeddings.nrows()
                )));
            }
        }
        if embeddings.ncols() == 0 {
            return Err(TensorIoError::InvalidBatch("zero-dimensional embeddings".into()));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(TensorIoError::InvalidBatch(format!("non-finite component at flat index {pos}")));
        }
        Ok(Self { embeddings, grid, source_id: source_id.into(), task_id: task_id.into() })
    }

    /// Builds a batch from a decoded f32 tensor: `[h, w, d]` is grid-shaped,
    /// `[n, d]` is a plain row set and `[d]` a single embedding.
    pub fn from_tensor(
        t: TensorFile,
        task_id: impl Into<String>,
        source_id: impl Into<String>,
        path: Option<&Path>,
    ) -> Result<Self, TensorIoError> {
        let path_buf = || path.map(Path::to_path_buf);
        if t.dtype() != DType::F32 {
            return Err(TensorIoError::DtypeMismatch {
                path: path_buf(),
                offset: 4,
                detail: "embeddings must be f32".into(),
            });
        }
        let (dims, data) = t.into_data();
        let TensorData::F32(values) = data else { unreachable!() };
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let header = 6 + 4 * dims.len();
            return Err(TensorIoError::NonFinite { path: path_buf(), offset: (header + 4 * pos) as u64 });
        }
        let (rows, cols, grid) = match dims.as_slice() {
            [h, w, d] => (h * w, *d, Some((*h, *w))),
            [n, d] => (*n, *d, None),
            [d] => (1, *d, None),
            _ => unreachable!("rank validated on decode"),
        };
        let embeddings = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| TensorIoError::InvalidBatch(e.to_string()))?;
        Self::new(embeddings, grid, task_id, source_id)
    }

    pub fn read(
        path: impl AsRef<Path>,
        task_id: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Result<Self, TensorIoError> {
        let path = path.as_ref();
        let t = read_tensor(path)?;
        Self::from_tensor(t, task_id, source_id, Some(path))
    }

    pub fn to_tensor(&self) -> TensorFile {
        let dims = match self.grid {
            Some((h, w)) => vec![h, w, self.dim()],
            None => vec![self.len(), self.dim()],
        };
        let values = self.embeddings.iter().copied().collect();
        TensorFile::from_f32(dims, values).expect("batch shape is always a valid tensor")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
        write_tensor(&self.to_tensor(), path)
    }

    pub fn embeddings(&self) -> &Array2<f32> {
        &self.embeddings
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.task_id.clone(), self.source_id.clone())
    }

    /// Splits into consecutive row chunks of at most `rows` rows; chunks drop the grid.
    pub fn chunks(&self, rows: usize) -> Vec<EmbeddingBatch> {
        let rows = rows.max(1);
        if rows >= self.len() {
            return vec![self.clone()];
        }
        self.embeddings
            .axis_chunks_iter(ndarray::Axis(0), rows)
            .map(|c| EmbeddingBatch {
                embeddings: c.to_owned(),
                grid: None,
                source_id: self.source_id.clone(),
                task_id: self.task_id.clone(),
            })
            .collect()
    }
}
