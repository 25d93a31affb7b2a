//! PMAT dense matrix files.
//!
//! Layout: the six magic bytes `PMAT1\0`, rows and cols as little-endian
//! u64, then `rows * cols` little-endian IEEE-754 f64 values in column-major
//! order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 6] = b"PMAT1\0";
const HEADER: usize = 6 + 16;

pub fn encode(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    // nalgebra storage is already column-major
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Matrix> {
    let fail = |reason: String| Error::Pmat {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER || &bytes[..6] != MAGIC {
        return Err(fail("missing PMAT1 header".into()));
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| fail(format!("dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[HEADER..];
    if payload.len() != expected {
        return Err(fail(format!(
            "expected {expected} payload bytes for {rows}x{cols}, found {}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    Ok(Matrix::from_iterator(rows, cols, values))
}

pub fn write(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    std::fs::write(path, encode(m))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    decode(&std::fs::read(path)?, path)
}
