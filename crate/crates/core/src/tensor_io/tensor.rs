//! Minimal binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size      | field                         |
//! |--------|-----------|-------------------------------|
//! | 0      | 4         | magic `b"CADT"`               |
//! | 4      | 1         | dtype (0 = f32-le, 1 = u8)    |
//! | 5      | 1         | rank (1..=3)                  |
//! | 6      | 4 × rank  | dims, u32 each, all ≥ 1       |
//! | ...    | payload   | row-major, `product(dims)` items |
//!
//! Readers reject trailing bytes as well as truncated payloads.

use std::fs;
use std::path::{Path, PathBuf};

use super::TensorIoError;

pub const MAGIC: [u8; 4] = *b"CADT";
pub const MAX_RANK: usize = 3;
const HEADER_FIXED: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::U8 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::U8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bitwise equality, so `-0.0 != 0.0` and identical NaN payloads compare equal.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    dims: Vec<usize>,
    data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, TensorIoError> {
        validate_dims(&dims, None)?;
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(TensorIoError::SizeMismatch {
                path: None,
                offset: 0,
                expected: (expected * data.dtype().size()) as u64,
                actual: (data.len() * data.dtype().size()) as u64,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self, TensorIoError> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn from_u8(dims: Vec<usize>, values: Vec<u8>) -> Result<Self, TensorIoError> {
        Self::new(dims, TensorData::U8(values))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn into_data(self) -> (Vec<usize>, TensorData) {
        (self.dims, self.data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.data.len() * self.dtype().size();
        let mut out = Vec::with_capacity(HEADER_FIXED + 4 * self.rank() + payload);
        out.extend_from_slice(&MAGIC);
        out.push(self.dtype().code());
        out.push(self.rank() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parses a complete container. `path` is only used to annotate errors.
    pub fn decode(bytes: &[u8], path: Option<&Path>) -> Result<Self, TensorIoError> {
        let path_buf = || path.map(Path::to_path_buf);
        if bytes.len() < HEADER_FIXED {
            return Err(TensorIoError::SizeMismatch {
                path: path_buf(),
                offset: 0,
                expected: HEADER_FIXED as u64,
                actual: bytes.len() as u64,
            });
        }
        if bytes[..4] != MAGIC {
            return Err(TensorIoError::BadMagic {
                path: path_buf(),
                offset: 0,
                found: [bytes[0], bytes[1], bytes[2], bytes[3]],
            });
        }
        let dtype = DType::from_code(bytes[4]).ok_or_else(|| TensorIoError::DtypeMismatch {
            path: path_buf(),
            offset: 4,
            detail: format!("unknown dtype code {}", bytes[4]),
        })?;
        let rank = bytes[5] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(TensorIoError::InvalidShape {
                path: path_buf(),
                offset: 5,
                detail: format!("rank {rank} outside 1..={MAX_RANK}"),
            });
        }
        let dims_end = HEADER_FIXED + 4 * rank;
        if bytes.len() < dims_end {
            return Err(TensorIoError::SizeMismatch {
                path: path_buf(),
                offset: HEADER_FIXED as u64,
                expected: dims_end as u64,
                actual: bytes.len() as u64,
            });
        }
        let dims: Vec<usize> = bytes[HEADER_FIXED..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(TensorIoError::InvalidShape {
                path: path_buf(),
                offset: (HEADER_FIXED + 4 * pos) as u64,
                detail: format!("dimension {pos} is zero"),
            });
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(dtype.size()))
            .ok_or_else(|| TensorIoError::InvalidShape {
                path: path_buf(),
                offset: HEADER_FIXED as u64,
                detail: "element count overflows".into(),
            })?;
        let payload = &bytes[dims_end..];
        if payload.len() != count {
            return Err(TensorIoError::SizeMismatch {
                path: path_buf(),
                offset: dims_end as u64,
                expected: count as u64,
                actual: payload.len() as u64,
            });
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { dims, data })
    }
}

fn validate_dims(dims: &[usize], path: Option<PathBuf>) -> Result<(), TensorIoError> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(TensorIoError::InvalidShape {
            path,
            offset: 5,
            detail: format!("rank {} outside 1..={MAX_RANK}", dims.len()),
        });
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0 || d > u32::MAX as usize) {
        return Err(TensorIoError::InvalidShape {
            path,
            offset: (HEADER_FIXED + 4 * pos) as u64,
            detail: format!("dimension {pos} = {} not in 1..=u32::MAX", dims[pos]),
        });
    }
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile, TensorIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorIoError::Io {
        path: path.to_path_buf(),
        offset: 0,
        source,
    })?;
    TensorFile::decode(&bytes, Some(path))
}

/// Reads a tensor and requires the given dtype.
pub fn read_tensor_as(path: impl AsRef<Path>, dtype: DType) -> Result<TensorFile, TensorIoError> {
    let path = path.as_ref();
    let t = read_tensor(path)?;
    if t.dtype() != dtype {
        return Err(TensorIoError::DtypeMismatch {
            path: Some(path.to_path_buf()),
            offset: 4,
            detail: format!("expected {:?}, found {:?}", dtype, t.dtype()),
        });
    }
    Ok(t)
}

pub fn write_tensor(t: &TensorFile, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    // Construction already validates, but dims may not fit the u32 header.
    validate_dims(t.dims(), Some(path.to_path_buf()))?;
    fs::write(path, t.encode()).map_err(|source| TensorIoError::Io {
        path: path.to_path_buf(),
        offset: 0,
        source,
    })
}
