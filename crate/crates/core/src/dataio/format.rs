//! Little-endian binary containers.
//!
//! `MVF1` matrix: magic, `u32` rows, `u32` cols, then `rows * cols` IEEE-754
//! `f32` values row-major. `MVL1` labels: magic, `u32` count, then `count`
//! `u32` class ids. Values are held as `f64` in memory and rounded to `f32`
//! on write.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"MVF1";
pub const LABEL_MAGIC: &[u8; 4] = b"MVL1";

/// Appends the `MVF1` encoding of `m` to `out`.
pub fn encode_matrix(m: &Matrix, out: &mut Vec<u8>) {
    out.reserve(12 + 4 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Decodes one `MVF1` record starting at `*offset`, advancing it past the
/// record. `path` is only used for error messages.
pub fn decode_matrix(bytes: &[u8], offset: &mut usize, path: &Path) -> Result<Matrix> {
    let start = *offset;
    let header = bytes.get(start..start + 12).ok_or_else(|| Error::Truncated {
        path: path.to_owned(),
        expected: start + 12,
        found: bytes.len(),
    })?;
    if &header[..4] != MATRIX_MAGIC {
        return Err(Error::Format {
            path: path.to_owned(),
            msg: format!(
                "expected magic MVF1 at byte {start}, found {:?}",
                String::from_utf8_lossy(&header[..4])
            ),
        });
    }
    let rows = read_u32(header, 4) as usize;
    let cols = read_u32(header, 8) as usize;
    let n = rows * cols;
    let payload = &bytes[start + 12..];
    if payload.len() < n * 4 {
        return Err(Error::Truncated {
            path: path.to_owned(),
            expected: n * 4,
            found: payload.len(),
        });
    }
    let mut data = Vec::with_capacity(n);
    for (i, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(Error::NonFiniteData {
                path: path.to_owned(),
                index: i,
            });
        }
        data.push(v as f64);
    }
    *offset = start + 12 + n * 4;
    Matrix::new(rows, cols, data)
}

pub fn write_feature_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    encode_matrix(m, &mut bytes);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut offset = 0;
    let m = decode_matrix(&bytes, &mut offset, path)?;
    if offset != bytes.len() {
        return Err(Error::Format {
            path: path.to_owned(),
            msg: format!("{} trailing bytes after payload", bytes.len() - offset),
        });
    }
    Ok(m)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u32]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(8 + 4 * labels.len());
    bytes.extend_from_slice(LABEL_MAGIC);
    bytes.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for l in labels {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            path: path.to_owned(),
            expected: 8,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != LABEL_MAGIC {
        return Err(Error::Format {
            path: path.to_owned(),
            msg: format!(
                "expected magic MVL1, found {:?}",
                String::from_utf8_lossy(&bytes[..4])
            ),
        });
    }
    let count = read_u32(&bytes, 4) as usize;
    let payload = &bytes[8..];
    if payload.len() != count * 4 {
        return Err(Error::Truncated {
            path: path.to_owned(),
            expected: count * 4,
            found: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect())
}

/// Reads a text file holding one decimal integer per line. Blank lines are
/// skipped.
pub fn read_id_list(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id = line.parse::<usize>().map_err(|_| Error::Format {
            path: path.to_owned(),
            msg: format!("line {}: expected a non-negative integer, found {line:?}", n + 1),
        })?;
        ids.push(id);
    }
    Ok(ids)
}

pub fn write_id_list(path: impl AsRef<Path>, ids: impl IntoIterator<Item = usize>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for id in ids {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
