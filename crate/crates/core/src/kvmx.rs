//! KVMX binary matrix files.
//!
//! A matrix record is, little-endian:
//!
//! ```text
//! "KVMX"  u32 version (= 1)  u64 rows  u64 cols  rows·cols × f64 (row-major)
//! ```
//!
//! A batch file is the magic `"KVB1"` followed by two matrix records, the keys
//! `K1` and then the values `V1`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::memory::EditBatch;

pub const MATRIX_MAGIC: [u8; 4] = *b"KVMX";
pub const BATCH_MAGIC: [u8; 4] = *b"KVB1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum KvmxError {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: [u8; 4],
        found: [u8; 4],
    },
    #[error("unsupported KVMX version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated record: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("matrix dimensions {rows} x {cols} overflow the addressable size")]
    DimOverflow { rows: u64, cols: u64 },
    #[error("non-finite entry at byte offset {offset} (row {row}, column {col})")]
    NonFinite { offset: usize, row: usize, col: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_matrix(m: &DMatrix<f64>, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(&MATRIX_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn take(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], KvmxError> {
    let available = bytes.len().saturating_sub(offset);
    if available < len {
        return Err(KvmxError::Truncated {
            offset,
            needed: len,
            available,
        });
    }
    Ok(&bytes[offset..offset + len])
}

fn magic(bytes: &[u8], offset: usize, expected: [u8; 4]) -> Result<(), KvmxError> {
    let found: [u8; 4] = take(bytes, offset, 4)?.try_into().unwrap();
    if found != expected {
        return Err(KvmxError::BadMagic {
            offset,
            expected,
            found,
        });
    }
    Ok(())
}

/// Decodes one matrix record starting at `offset`; returns the matrix and the
/// offset just past it.
pub fn decode_matrix_at(bytes: &[u8], offset: usize) -> Result<(DMatrix<f64>, usize), KvmxError> {
    magic(bytes, offset, MATRIX_MAGIC)?;
    let header = take(bytes, offset, HEADER_LEN)?;
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(KvmxError::UnsupportedVersion(version));
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let overflow = KvmxError::DimOverflow { rows, cols };
    let (r, c) = match (usize::try_from(rows), usize::try_from(cols)) {
        (Ok(r), Ok(c)) => (r, c),
        _ => return Err(overflow),
    };
    let payload_len = r
        .checked_mul(c)
        .and_then(|n| n.checked_mul(8))
        .ok_or(overflow)?;
    let start = offset + HEADER_LEN;
    let payload = take(bytes, start, payload_len)?;

    let mut m = DMatrix::zeros(r, c);
    for (idx, chunk) in payload.chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(chunk.try_into().unwrap());
        let (row, col) = (idx / c, idx % c);
        if !x.is_finite() {
            return Err(KvmxError::NonFinite {
                offset: start + 8 * idx,
                row,
                col,
            });
        }
        m[(row, col)] = x;
    }
    Ok((m, start + payload_len))
}

/// Decodes a buffer holding exactly one matrix record.
pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>, KvmxError> {
    let (m, end) = decode_matrix_at(bytes, 0)?;
    if end != bytes.len() {
        return Err(KvmxError::TrailingBytes(bytes.len() - end));
    }
    Ok(m)
}

pub fn encode_batch(k1: &DMatrix<f64>, v1: &DMatrix<f64>, out: &mut Vec<u8>) {
    out.extend_from_slice(&BATCH_MAGIC);
    encode_matrix(k1, out);
    encode_matrix(v1, out);
}

pub fn decode_batch(bytes: &[u8]) -> crate::Result<EditBatch> {
    magic(bytes, 0, BATCH_MAGIC)?;
    let (k1, next) = decode_matrix_at(bytes, 4)?;
    let (v1, end) = decode_matrix_at(bytes, next)?;
    if end != bytes.len() {
        return Err(KvmxError::TrailingBytes(bytes.len() - end).into());
    }
    EditBatch::new(k1, v1)
}

pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>, KvmxError> {
    decode_matrix(&std::fs::read(path)?)
}

pub fn save_matrix_file(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<(), KvmxError> {
    let mut buf = Vec::new();
    encode_matrix(m, &mut buf);
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_batch_file(path: impl AsRef<Path>) -> crate::Result<EditBatch> {
    decode_batch(&std::fs::read(path)?)
}

pub fn save_batch_file(path: impl AsRef<Path>, batch: &EditBatch) -> Result<(), KvmxError> {
    let mut buf = Vec::new();
    encode_batch(batch.keys(), batch.values(), &mut buf);
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}
