//! The ZFB binary containers.
//!
//! Matrix files start with a 4-byte magic (`ZFB1` for float32 payloads,
//! `ZFB8` for float64 payloads), followed by `rows` and `cols` as
//! little-endian `u64`, followed by `rows * cols` little-endian IEEE-754
//! values in row-major order.
//!
//! Label files start with `ZFL1`, a little-endian `u64` count, then `count`
//! little-endian `u32` class indices.
//!
//! Readers never trust the header: the payload length is checked against
//! `rows * cols` before anything is decoded, and every decoded value must be
//! finite.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC_F32: &[u8; 4] = b"ZFB1";
pub const MAGIC_F64: &[u8; 4] = b"ZFB8";
pub const MAGIC_LABELS: &[u8; 4] = b"ZFL1";

const MATRIX_HEADER: usize = 4 + 8 + 8;
const LABEL_HEADER: usize = 4 + 8;

/// Element width of a matrix payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn magic(self) -> &'static [u8; 4] {
        match self {
            Precision::F32 => MAGIC_F32,
            Precision::F64 => MAGIC_F64,
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

pub fn encode_matrix(matrix: &Array2<f64>, precision: Precision) -> Vec<u8> {
    let (rows, cols) = matrix.dim();
    let mut out = Vec::with_capacity(MATRIX_HEADER + rows * cols * precision.width());
    out.extend_from_slice(precision.magic());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for &v in matrix.iter() {
        match precision {
            Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8], file: &Path) -> Result<(Array2<f64>, Precision)> {
    let fail = |offset: usize, message: String| Error::Format {
        file: file.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < MATRIX_HEADER {
        return Err(fail(
            bytes.len(),
            format!("truncated header: {} of {MATRIX_HEADER} bytes", bytes.len()),
        ));
    }
    let precision = match &bytes[..4] {
        m if m == MAGIC_F32 => Precision::F32,
        m if m == MAGIC_F64 => Precision::F64,
        m => {
            return Err(fail(
                0,
                format!("bad magic {:?}, expected \"ZFB1\" or \"ZFB8\"", String::from_utf8_lossy(m)),
            ))
        }
    };
    let rows = read_u64(bytes, 4);
    let cols = read_u64(bytes, 12);
    let payload = &bytes[MATRIX_HEADER..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(precision.width() as u64))
        .ok_or_else(|| fail(4, format!("shape {rows}x{cols} overflows")))?;
    if payload.len() as u64 != expected {
        return Err(fail(
            MATRIX_HEADER + payload.len().min(expected as usize),
            format!(
                "payload holds {} bytes, header {rows}x{cols} requires {expected}",
                payload.len()
            ),
        ));
    }
    let width = precision.width();
    let mut values = Vec::with_capacity((rows * cols) as usize);
    for (i, chunk) in payload.chunks_exact(width).enumerate() {
        let v = match precision {
            Precision::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Precision::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(fail(
                MATRIX_HEADER + i * width,
                format!("non-finite value {v} at element {i}"),
            ));
        }
        values.push(v);
    }
    let matrix = Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| fail(4, e.to_string()))?;
    Ok((matrix, precision))
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LABEL_HEADER + 4 * labels.len());
    out.extend_from_slice(MAGIC_LABELS);
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8], file: &Path) -> Result<Vec<usize>> {
    let fail = |offset: usize, message: String| Error::Format {
        file: file.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < LABEL_HEADER {
        return Err(fail(
            bytes.len(),
            format!("truncated header: {} of {LABEL_HEADER} bytes", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC_LABELS {
        return Err(fail(
            0,
            format!("bad magic {:?}, expected \"ZFL1\"", String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    let count = read_u64(bytes, 4);
    let payload = &bytes[LABEL_HEADER..];
    if payload.len() as u64 != count.saturating_mul(4) {
        return Err(fail(
            LABEL_HEADER + payload.len().min(count as usize * 4),
            format!("payload holds {} bytes, count {count} requires {}", payload.len(), count * 4),
        ));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect())
}

pub fn write_matrix(path: &Path, matrix: &Array2<f64>, precision: Precision) -> Result<()> {
    fs::write(path, encode_matrix(matrix, precision)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path).map(|(m, _)| m)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes, path)
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}
