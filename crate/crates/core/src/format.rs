//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! | field    | size      |
//! |----------|-----------|
//! | magic    | `b"ISON"` |
//! | version  | u16       |
//! | dtype    | u8 (0 = f32, 1 = f64) |
//! | reserved | u8        |
//! | rank     | u64       |
//! | dims     | rank × u64 |
//! | payload  | row-major values |
//! | crc32    | u32 over every preceding byte |

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use sha2::{Digest, Sha256};

use crate::error::{shape_err, Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"ISON";
pub const TENSOR_VERSION: u16 = 1;
const FIXED_HEADER: usize = 4 + 2 + 1 + 1 + 8;
const MAX_RANK: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// A dense tensor with a shape and element type.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    dims: Vec<usize>,
    data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = match &data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        };
        if expected != Some(len) {
            return Err(shape_err(format!("{len} values do not fill dims {dims:?}")));
        }
        if dims.len() as u64 > MAX_RANK {
            return Err(shape_err(format!("rank {} exceeds {MAX_RANK}", dims.len())));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn from_matrix(m: &Array2<f64>) -> Self {
        let data = m.iter().copied().collect();
        TensorFile { dims: vec![m.nrows(), m.ncols()], data: TensorData::F64(data) }
    }

    pub fn from_matrix_f32(m: &Array2<f32>) -> Self {
        let data = m.iter().copied().collect();
        TensorFile { dims: vec![m.nrows(), m.ncols()], data: TensorData::F32(data) }
    }

    pub fn from_vector(v: &Array1<f64>) -> Self {
        TensorFile { dims: vec![v.len()], data: TensorData::F64(v.to_vec()) }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Values widened to f64.
    pub fn values_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn to_array(&self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(&self.dims), self.values_f64()).expect("validated shape")
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        match self.dims[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), self.values_f64()).expect("validated shape")),
            _ => Err(shape_err(format!("expected a rank-2 tensor, got dims {:?}", self.dims))),
        }
    }

    pub fn to_matrix_f32(&self) -> Result<Array2<f32>> {
        let values = match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        };
        match self.dims[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), values).expect("validated shape")),
            _ => Err(shape_err(format!("expected a rank-2 tensor, got dims {:?}", self.dims))),
        }
    }

    pub fn to_vector(&self) -> Result<Array1<f64>> {
        match self.dims[..] {
            [_] => Ok(Array1::from(self.values_f64())),
            _ => Err(shape_err(format!("expected a rank-1 tensor, got dims {:?}", self.dims))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.dtype();
        let count: usize = self.dims.iter().product();
        let mut out = Vec::with_capacity(FIXED_HEADER + 8 * self.dims.len() + dtype.width() * count + 4);
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.push(dtype.code());
        out.push(0);
        out.extend_from_slice(&(self.dims.len() as u64).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::Format("missing tensor magic".into()));
        }
        let body = verify_trailing_crc(bytes, FIXED_HEADER)?;
        let version = u16::from_le_bytes([body[4], body[5]]);
        if version != TENSOR_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: TENSOR_VERSION });
        }
        let dtype = match body[6] {
            0 => DType::F32,
            1 => DType::F64,
            other => return Err(Error::Format(format!("unknown dtype code {other}"))),
        };
        let mut cursor = Cursor { bytes: body, pos: 8 };
        let rank = cursor.u64()?;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(usize::try_from(cursor.u64()?).map_err(|_| Error::Format("dimension overflow".into()))?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let payload = cursor.rest();
        if Some(payload.len()) != count.checked_mul(dtype.width()) {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header declares {count} values of {} bytes",
                payload.len(),
                dtype.width()
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
            ),
            DType::F64 => TensorData::F64(
                payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
            ),
        };
        Ok(TensorFile { dims, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Checks the trailing CRC32 and returns the bytes it covers. Files shorter than
/// `min_body + 4` count as truncated.
pub(crate) fn verify_trailing_crc(bytes: &[u8], min_body: usize) -> Result<&[u8]> {
    if bytes.len() < min_body + 4 {
        return Err(Error::ChecksumFailure);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumFailure);
    }
    Ok(body)
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        out
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
