//! Memory-bank snapshots: an f32 `[m, D]` tensor plus a JSON sidecar holding
//! capacity, provenance and the format version. An empty bank has no tensor file.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{read_tensor_as, write_tensor, DType, Provenance, TensorFile, TensorIoError};

pub const BANK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBankSnapshot {
    pub embeddings: Array2<f32>,
    pub capacity: usize,
    pub provenance: Vec<Provenance>,
    pub format_version: u32,
}

impl MemoryBankSnapshot {
    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Bit-level equality of the embeddings plus metadata.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity
            && self.format_version == other.format_version
            && self.provenance == other.provenance
            && self.embeddings.dim() == other.embeddings.dim()
            && self.embeddings.iter().zip(other.embeddings.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    capacity: usize,
    rows: usize,
    dim: usize,
    provenance: Vec<(String, String)>,
}

/// `bank.cadt` → `bank.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_bank(snapshot: &MemoryBankSnapshot, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    let corrupt = |detail: String| TensorIoError::CorruptPayload { path: path.to_path_buf(), detail };
    if snapshot.provenance.len() != snapshot.len() {
        return Err(corrupt(format!(
            "{} provenance entries for {} rows",
            snapshot.provenance.len(),
            snapshot.len()
        )));
    }
    if snapshot.len() > snapshot.capacity {
        return Err(corrupt(format!("{} rows exceed capacity {}", snapshot.len(), snapshot.capacity)));
    }
    let sidecar = Sidecar {
        format_version: snapshot.format_version,
        capacity: snapshot.capacity,
        rows: snapshot.len(),
        dim: snapshot.dim(),
        provenance: snapshot
            .provenance
            .iter()
            .map(|p| (p.task_id.clone(), p.source_id.clone()))
            .collect(),
    };
    if snapshot.is_empty() {
        if path.is_file() {
            fs::remove_file(path).map_err(|source| io_err(path, source))?;
        }
    } else {
        let values = snapshot.embeddings.iter().copied().collect();
        let t = TensorFile::from_f32(vec![snapshot.len(), snapshot.dim()], values)?;
        write_tensor(&t, path)?;
    }
    let meta = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(&meta, text).map_err(|source| io_err(&meta, source))
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<MemoryBankSnapshot, TensorIoError> {
    let path = path.as_ref();
    let meta = sidecar_path(path);
    let text = fs::read_to_string(&meta).map_err(|source| io_err(&meta, source))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| TensorIoError::CorruptPayload { path: meta.clone(), detail: e.to_string() })?;
    if sidecar.format_version != BANK_FORMAT_VERSION {
        return Err(TensorIoError::VersionUnsupported {
            path: meta,
            found: sidecar.format_version,
            supported: BANK_FORMAT_VERSION,
        });
    }
    let corrupt = |detail: String| TensorIoError::CorruptPayload { path: path.to_path_buf(), detail };
    if sidecar.provenance.len() != sidecar.rows {
        return Err(corrupt(format!(
            "{} provenance entries for {} rows",
            sidecar.provenance.len(),
            sidecar.rows
        )));
    }
    if sidecar.rows > sidecar.capacity {
        return Err(corrupt(format!("{} rows exceed capacity {}", sidecar.rows, sidecar.capacity)));
    }
    let embeddings = if sidecar.rows == 0 {
        Array2::zeros((0, sidecar.dim))
    } else {
        let t = read_tensor_as(path, DType::F32)?;
        if t.dims() != [sidecar.rows, sidecar.dim] {
            return Err(corrupt(format!(
                "tensor dims {:?} disagree with sidecar [{}, {}]",
                t.dims(),
                sidecar.rows,
                sidecar.dim
            )));
        }
        let values = t.as_f32().expect("dtype checked").to_vec();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(TensorIoError::NonFinite { path: Some(path.to_path_buf()), offset: (14 + 4 * pos) as u64 });
        }
        Array2::from_shape_vec((sidecar.rows, sidecar.dim), values).expect("dims checked")
    };
    Ok(MemoryBankSnapshot {
        embeddings,
        capacity: sidecar.capacity,
        provenance: sidecar.provenance.into_iter().map(|(t, s)| Provenance::new(t, s)).collect(),
        format_version: sidecar.format_version,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> TensorIoError {
    TensorIoError::Io { path: path.to_path_buf(), offset: 0, source }
}
