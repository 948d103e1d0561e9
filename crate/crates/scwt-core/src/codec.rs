//! The `ENCF` container for encoded feature tensors, plus storage accounting.
//!
//! Layout (little-endian): magic `ENCF`, format version u16, dtype code u8
//! (f32=0, f64=1), rank u8, dims u32 each, producer-model fingerprint u64,
//! then the row-major payload. Deserializing returns a bit-identical tensor.
//!
//! Sizes are reported in decimal megabytes: file bytes divided by 1e6.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ENCF_MAGIC: [u8; 4] = *b"ENCF";
pub const ENCF_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not an ENCF file (bad magic)")]
    BadMagic,
    #[error("unsupported ENCF version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("dtype mismatch: file holds {found}, caller expects {expected}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("file truncated: {0}")]
    Truncated(String),
    #[error("file has trailing bytes after the payload")]
    TrailingBytes,
    #[error("tensor has no dimensions")]
    EmptyDims,
    #[error("dimension {0} exceeds the u32 header field")]
    DimTooLarge(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CodecError + '_ {
    move |source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Exact header size in bytes for a tensor of the given rank.
pub fn header_len(rank: usize) -> u64 {
    (4 + 2 + 1 + 1 + 4 * rank + 8) as u64
}

/// Serialize `latent` to `path` (written to a temp file, then renamed).
/// Returns the exact number of bytes on disk, header included.
pub fn serialize_features<S: Scalar>(
    latent: &Tensor<S>,
    fingerprint: u64,
    path: &Path,
) -> Result<u64, CodecError> {
    if latent.rank() == 0 {
        return Err(CodecError::EmptyDims);
    }
    let mut header = Vec::with_capacity(header_len(latent.rank()) as usize);
    header.extend_from_slice(&ENCF_MAGIC);
    header.extend_from_slice(&ENCF_VERSION.to_le_bytes());
    header.push(S::DTYPE_CODE);
    header.push(latent.rank() as u8);
    for &d in latent.shape() {
        if d > u32::MAX as usize {
            return Err(CodecError::DimTooLarge(d));
        }
        header.extend_from_slice(&(d as u32).to_le_bytes());
    }
    header.extend_from_slice(&fingerprint.to_le_bytes());

    let tmp = path.with_extension("encf.tmp");
    {
        let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header).map_err(io_err(&tmp))?;
        let mut chunk = Vec::with_capacity(64 * 1024 * S::BYTE_WIDTH);
        for block in latent.data().chunks(64 * 1024) {
            chunk.clear();
            for &v in block {
                v.write_le(&mut chunk);
            }
            out.write_all(&chunk).map_err(io_err(&tmp))?;
        }
        out.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(header.len() as u64 + (latent.numel() * S::BYTE_WIDTH) as u64)
}

/// Read an ENCF file back as a tensor plus the producer fingerprint.
pub fn deserialize_features<S: Scalar>(path: &Path) -> Result<(Tensor<S>, u64), CodecError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = std::io::BufReader::with_capacity(1 << 20, file);

    let mut fixed = [0u8; 8];
    read_exactly(&mut reader, &mut fixed, path, "header")?;
    if fixed[0..4] != ENCF_MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = u16::from_le_bytes(fixed[4..6].try_into().unwrap());
    if version != ENCF_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let dtype = fixed[6];
    let found = match dtype {
        0 => "f32",
        1 => "f64",
        other => return Err(CodecError::UnknownDtype(other)),
    };
    if dtype != S::DTYPE_CODE {
        return Err(CodecError::DtypeMismatch {
            expected: S::DTYPE_NAME,
            found,
        });
    }
    let rank = fixed[7] as usize;
    if rank == 0 {
        return Err(CodecError::EmptyDims);
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut buf = [0u8; 4];
        read_exactly(&mut reader, &mut buf, path, "dims")?;
        dims.push(u32::from_le_bytes(buf) as usize);
    }
    let mut buf = [0u8; 8];
    read_exactly(&mut reader, &mut buf, path, "fingerprint")?;
    let fingerprint = u64::from_le_bytes(buf);

    let numel: usize = dims.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut raw = vec![0u8; 64 * 1024 * S::BYTE_WIDTH];
    let mut remaining = numel;
    while remaining > 0 {
        let take = remaining.min(64 * 1024);
        let bytes = take * S::BYTE_WIDTH;
        read_exactly(&mut reader, &mut raw[..bytes], path, "payload")?;
        for piece in raw[..bytes].chunks_exact(S::BYTE_WIDTH) {
            data.push(S::read_le(piece));
        }
        remaining -= take;
    }
    let mut probe = [0u8; 1];
    match reader.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(CodecError::TrailingBytes),
        Err(source) => {
            return Err(CodecError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    }
    let tensor = Tensor::new(&dims, data).map_err(|_| CodecError::EmptyDims)?;
    Ok((tensor, fingerprint))
}

fn read_exactly(
    reader: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
    what: &str,
) -> Result<(), CodecError> {
    reader.read_exact(buf).map_err(|source| {
        if source.kind() == std::io::ErrorKind::UnexpectedEof {
            CodecError::Truncated(format!("{what} incomplete"))
        } else {
            CodecError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

/// File size in decimal megabytes (bytes / 1e6).
pub fn measure_size_mb(path: &Path) -> Result<f64, CodecError> {
    let bytes = fs::metadata(path).map_err(io_err(path))?.len();
    Ok(bytes as f64 / 1e6)
}

/// Storage reduction percentage: `100 * (1 - encoded/original)`. Unrounded;
/// rounding happens only at display time.
pub fn compute_reduction(original_bytes: u64, encoded_bytes: u64) -> f64 {
    100.0 * (1.0 - encoded_bytes as f64 / original_bytes as f64)
}

/// Same reduction arithmetic for sizes already expressed in megabytes.
pub fn compute_reduction_mb(original_mb: f64, encoded_mb: f64) -> f64 {
    100.0 * (1.0 - encoded_mb / original_mb)
}

/// Byte accounting for one original/encoded pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub original_bytes: u64,
    pub encoded_bytes: u64,
    pub original_mb: f64,
    pub encoded_mb: f64,
    pub reduction_percent: f64,
}

impl StorageReport {
    pub fn new(original_bytes: u64, encoded_bytes: u64) -> Self {
        Self {
            original_bytes,
            encoded_bytes,
            original_mb: original_bytes as f64 / 1e6,
            encoded_mb: encoded_bytes as f64 / 1e6,
            reduction_percent: compute_reduction(original_bytes, encoded_bytes),
        }
    }
}
