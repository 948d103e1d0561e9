//! Model weight files.
//!
//! Layout (little-endian): magic `SCWT`, format version u16, architecture
//! fingerprint u64, parameter count u32, then per parameter: rank u8,
//! dims u32 each, raw f32 payload. Weights can only be loaded back into a
//! model whose architecture hashes to the same fingerprint.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::model::ModelGraph;
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SCWT";
pub const WEIGHTS_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u16),
    #[error("architecture fingerprint mismatch: file {file:#018x}, model {model:#018x}")]
    FingerprintMismatch { file: u64, model: u64 },
    #[error("parameter count mismatch: file has {file}, model has {model}")]
    ParamCountMismatch { file: usize, model: usize },
    #[error("parameter {index} shape mismatch: file {file:?}, model {model:?}")]
    ShapeMismatch {
        index: usize,
        file: Vec<usize>,
        model: Vec<usize>,
    },
    #[error("weight file truncated")]
    Truncated,
    #[error("weight file has trailing bytes")]
    TrailingBytes,
}

/// Write all parameters of `model` to `path`. Returns bytes written.
pub fn save_weights(model: &ModelGraph<f32>, path: &Path) -> Result<u64, WeightsError> {
    let params = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&model.fingerprint().to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.push(p.rank() as u8);
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(out.len() as u64)
}

/// Load weights from `path` into `model`, verifying the fingerprint and
/// every parameter shape first.
pub fn load_weights(model: &mut ModelGraph<f32>, path: &Path) -> Result<(), WeightsError> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4)? != WEIGHTS_MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let file_fp = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let model_fp = model.fingerprint();
    if file_fp != model_fp {
        return Err(WeightsError::FingerprintMismatch {
            file: file_fp,
            model: model_fp,
        });
    }
    let count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let model_count = model.params().len();
    if count != model_count {
        return Err(WeightsError::ParamCountMismatch {
            file: count,
            model: model_count,
        });
    }

    let mut loaded: Vec<Tensor<f32>> = Vec::with_capacity(count);
    for index in 0..count {
        let rank = cur.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize);
        }
        let model_shape = model.params()[index].shape().to_vec();
        if dims != model_shape {
            return Err(WeightsError::ShapeMismatch {
                index,
                file: dims,
                model: model_shape,
            });
        }
        let numel: usize = dims.iter().product();
        let raw = cur.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        loaded.push(Tensor::new(&dims, data).expect("validated shape"));
    }
    if cur.pos != bytes.len() {
        return Err(WeightsError::TrailingBytes);
    }
    for (slot, tensor) in model.params_mut().into_iter().zip(loaded) {
        *slot = tensor;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightsError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}
