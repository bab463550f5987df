//! Little-endian binary tensor files.
//!
//! Layout: `b"USVT"`, format version (u32 = 1), dtype code (u32, 1 = f32),
//! rank (u32), one u32 per dimension, then the row-major f32 payload.
//! A rank-2 header is 24 bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::spectral::Spectrogram;

pub const MAGIC: &[u8; 4] = b"USVT";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a tensor file (bad magic)")]
    BadMagic,
    #[error("unsupported tensor header: {0}")]
    Unsupported(String),
    #[error("payload holds {actual} bytes, header implies {expected}")]
    Truncated { expected: usize, actual: usize },
}

/// A dense f32 tensor as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn header_len(rank: usize) -> usize {
    16 + 4 * rank
}

pub fn write_tensor(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<(), TensorError> {
    write_raw(
        &[spec.frames(), spec.bins()],
        spec.magnitudes(),
        path.as_ref(),
    )
}

pub fn write_raw(dims: &[usize], data: &[f32], path: &Path) -> Result<(), TensorError> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(TensorError::Unsupported(format!(
            "dims {dims:?} do not match {} values",
            data.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&DTYPE_F32.to_le_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| TensorError::Unsupported(format!("dimension {d} exceeds u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(TensorError::Unsupported(format!("version {version}")));
    }
    let dtype = read_u32(&mut r)?;
    if dtype != DTYPE_F32 {
        return Err(TensorError::Unsupported(format!("dtype code {dtype}")));
    }
    let rank = read_u32(&mut r)? as usize;
    let dims = (0..rank)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let expected = dims.iter().product::<usize>() * 4;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(TensorError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor { dims, data })
}
