//! IDX tensor files (the MNIST distribution format).
//!
//! Big-endian header: a 32-bit magic (`0x00000803` for 3-d u8 image tensors,
//! `0x00000801` for 1-d u8 label vectors), one big-endian u32 per dimension,
//! then the raw row-major payload. Files ending in `.gz` are decompressed
//! transparently.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

use super::ImageStack;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic 0x{found:08x} (expected 0x00000803 or 0x00000801)")]
    BadMagic { found: u32 },
    #[error("truncated header: need {expected} bytes, file has {actual}")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("dimension product overflows: {dims:?}")]
    DimensionOverflow { dims: Vec<u32> },
    #[error("empty tensor: {dims:?}")]
    Empty { dims: Vec<u32> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parsed IDX content.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    Images(ImageStack),
    Labels(Vec<u8>),
}

impl IdxData {
    pub fn into_images(self) -> Option<ImageStack> {
        match self {
            IdxData::Images(s) => Some(s),
            IdxData::Labels(_) => None,
        }
    }

    pub fn into_labels(self) -> Option<Vec<u8>> {
        match self {
            IdxData::Labels(l) => Some(l),
            IdxData::Images(_) => None,
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io_err = |source| IdxError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::open(path).map_err(io_err)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file)
            .read_to_end(&mut bytes)
            .map_err(io_err)?;
    } else {
        file.read_to_end(&mut bytes).map_err(io_err)?;
    }
    Ok(bytes)
}

/// Loads an IDX file; image bytes are scaled to `[0, 1]` by `/255`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxData, IdxError> {
    parse_idx(&read_all(path.as_ref())?)
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::TruncatedHeader {
            expected: 4,
            actual: bytes.len(),
        });
    }
    let magic = be_u32(bytes, 0);
    let ndims = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        found => return Err(IdxError::BadMagic { found }),
    };
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(IdxError::TruncatedHeader {
            expected: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<u32> = (0..ndims).map(|d| be_u32(bytes, 4 + 4 * d)).collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| IdxError::DimensionOverflow { dims: dims.clone() })?;
    if total == 0 {
        return Err(IdxError::Empty { dims });
    }
    let payload = &bytes[header..];
    if payload.len() < total {
        return Err(IdxError::Truncated {
            expected: total,
            actual: payload.len(),
        });
    }
    let payload = &payload[..total];
    if magic == LABELS_MAGIC {
        return Ok(IdxData::Labels(payload.to_vec()));
    }
    let pixels = payload.iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok(IdxData::Images(ImageStack {
        height: dims[1] as usize,
        width: dims[2] as usize,
        count: dims[0] as usize,
        pixels,
    }))
}

/// Serializes images as an IDX u8 tensor, rounding `pixel * 255`.
pub fn encode_images(stack: &ImageStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + stack.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [stack.count, stack.height, stack.width] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(
        stack
            .pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> std::io::Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::best());
        enc.write_all(bytes)?;
        enc.finish()?;
        Ok(())
    } else {
        file.write_all(bytes)
    }
}
