//! Task dataset trees.
//!
//! ```text
//! <root>/<task>/train/<image>.cadt     f32 embeddings, normal images only
//! <root>/<task>/test/<image>.cadt      f32 embeddings
//! <root>/<task>/test/labels.txt        one 0/1 per line, lexicographic file order
//! <root>/<task>/masks/<image>.cadt     optional u8 [H, W] ground truth per test image
//! <root>/<task>/task.cfg               optional `image_height = H` / `image_width = W`
//! ```
//!
//! Image size comes from `task.cfg`, else from the first mask, else
//! [`DEFAULT_IMAGE_SIZE`].

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{read_tensor_as, DType, EmbeddingBatch, TensorIoError};

pub const TRAIN_DIR: &str = "train";
pub const TEST_DIR: &str = "test";
pub const MASKS_DIR: &str = "masks";
pub const LABELS_FILE: &str = "labels.txt";
pub const TASK_CONFIG_FILE: &str = "task.cfg";
pub const TENSOR_EXT: &str = "cadt";
pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (224, 224);

#[derive(Debug, Clone, PartialEq)]
pub struct TestSample {
    pub batch: EmbeddingBatch,
    pub label: u8,
    /// Pixel ground truth at image resolution, 1 = anomalous.
    pub mask: Option<Array2<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: String,
    pub train: Vec<EmbeddingBatch>,
    pub test: Vec<TestSample>,
    pub image_size: (usize, usize),
}

impl TaskDataset {
    pub fn has_pixel_ground_truth(&self) -> bool {
        self.test.iter().any(|s| s.mask.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskParts {
    All,
    TrainOnly,
    TestOnly,
}

/// Lists task directories under `root` in lexicographic order.
pub fn discover_tasks(root: impl AsRef<Path>) -> Result<Vec<String>, TensorIoError> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|source| io_err(root, source))?;
    let mut tasks = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| io_err(root, source))?;
        if entry.path().join(TRAIN_DIR).is_dir() {
            tasks.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    tasks.sort();
    Ok(tasks)
}

pub fn load_task(root: impl AsRef<Path>, task_id: &str) -> Result<TaskDataset, TensorIoError> {
    load_task_parts(root, task_id, TaskParts::All)
}

pub fn load_task_parts(
    root: impl AsRef<Path>,
    task_id: &str,
    parts: TaskParts,
) -> Result<TaskDataset, TensorIoError> {
    let task_dir = root.as_ref().join(task_id);
    let train_dir = task_dir.join(TRAIN_DIR);
    let test_dir = task_dir.join(TEST_DIR);
    for (dir, wanted) in [
        (&train_dir, parts != TaskParts::TestOnly),
        (&test_dir, parts != TaskParts::TrainOnly),
    ] {
        if wanted && !dir.is_dir() {
            return Err(TensorIoError::MissingSplit {
                task: task_id.to_string(),
                what: "split directory".into(),
                path: dir.clone(),
            });
        }
    }

    let train = if parts == TaskParts::TestOnly {
        Vec::new()
    } else {
        list_tensors(&train_dir)?
            .into_iter()
            .map(|(stem, path)| EmbeddingBatch::read(&path, task_id, stem))
            .collect::<Result<_, _>>()?
    };

    let mut image_size = read_task_config(&task_dir.join(TASK_CONFIG_FILE))?;
    let test = if parts == TaskParts::TrainOnly {
        Vec::new()
    } else {
        let files = list_tensors(&test_dir)?;
        let labels_path = test_dir.join(LABELS_FILE);
        if !labels_path.is_file() {
            return Err(TensorIoError::MissingSplit {
                task: task_id.to_string(),
                what: "labels file".into(),
                path: labels_path,
            });
        }
        let labels = read_labels(&labels_path)?;
        if labels.len() != files.len() {
            return Err(TensorIoError::LabelCountMismatch {
                task: task_id.to_string(),
                labels: labels.len(),
                tensors: files.len(),
            });
        }
        let masks_dir = task_dir.join(MASKS_DIR);
        let mut samples = Vec::with_capacity(files.len());
        for ((stem, path), label) in files.into_iter().zip(labels) {
            let mask_path = masks_dir.join(format!("{stem}.{TENSOR_EXT}"));
            let mask = if mask_path.is_file() {
                let t = read_tensor_as(&mask_path, DType::U8)?;
                let size = *image_size.get_or_insert_with(|| match t.dims() {
                    [h, w] => (*h, *w),
                    _ => DEFAULT_IMAGE_SIZE,
                });
                if t.dims() != [size.0, size.1] {
                    return Err(TensorIoError::MaskShapeMismatch {
                        path: mask_path,
                        expected: size,
                        found: t.dims().to_vec(),
                    });
                }
                let values = t.as_u8().expect("dtype checked").iter().map(|&v| u8::from(v != 0)).collect();
                Some(Array2::from_shape_vec(size, values).expect("shape checked"))
            } else {
                None
            };
            let batch = EmbeddingBatch::read(&path, task_id, stem)?;
            samples.push(TestSample { batch, label, mask });
        }
        samples
    };

    Ok(TaskDataset {
        task_id: task_id.to_string(),
        train,
        test,
        image_size: image_size.unwrap_or(DEFAULT_IMAGE_SIZE),
    })
}

/// `(stem, path)` of every `.cadt` file in `dir`, sorted by file name.
fn list_tensors(dir: &Path) -> Result<Vec<(String, PathBuf)>, TensorIoError> {
    let entries = fs::read_dir(dir).map_err(|source| io_err(dir, source))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| io_err(dir, source))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == TENSOR_EXT) {
            let name = path.file_name().expect("file has a name").to_string_lossy().into_owned();
            files.push((name, path));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files
        .into_iter()
        .map(|(_, path)| {
            let stem = path.file_stem().expect("file has a stem").to_string_lossy().into_owned();
            (stem, path)
        })
        .collect())
}

fn read_labels(path: &Path) -> Result<Vec<u8>, TensorIoError> {
    let text = fs::read_to_string(path).map_err(|source| io_err(path, source))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let value = line.trim();
        if value.is_empty() {
            continue;
        }
        match value {
            "0" => labels.push(0),
            "1" => labels.push(1),
            _ => {
                return Err(TensorIoError::InvalidLabel {
                    path: path.to_path_buf(),
                    line: i + 1,
                    value: value.to_string(),
                })
            }
        }
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    let mut text = String::with_capacity(labels.len() * 2);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|source| io_err(path, source))
}

fn read_task_config(path: &Path) -> Result<Option<(usize, usize)>, TensorIoError> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|source| io_err(path, source))?;
    let bad = |detail: String| TensorIoError::InvalidTaskConfig { path: path.to_path_buf(), detail };
    let (mut h, mut w) = (None, None);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
        let parsed: usize = value.trim().parse().map_err(|_| bad(format!("bad integer {:?}", value.trim())))?;
        if parsed == 0 {
            return Err(bad(format!("{} must be positive", key.trim())));
        }
        match key.trim() {
            "image_height" => h = Some(parsed),
            "image_width" => w = Some(parsed),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    match (h, w) {
        (Some(h), Some(w)) => Ok(Some((h, w))),
        (None, None) => Ok(None),
        _ => Err(bad("image_height and image_width must be given together".into())),
    }
}

pub fn write_task_config(task_dir: impl AsRef<Path>, image_size: (usize, usize)) -> Result<(), TensorIoError> {
    let path = task_dir.as_ref().join(TASK_CONFIG_FILE);
    let text = format!("image_height = {}\nimage_width = {}\n", image_size.0, image_size.1);
    fs::write(&path, text).map_err(|source| io_err(&path, source))
}

fn io_err(path: &Path, source: std::io::Error) -> TensorIoError {
    TensorIoError::Io { path: path.to_path_buf(), offset: 0, source }
}
