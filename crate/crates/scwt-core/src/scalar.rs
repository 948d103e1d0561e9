//! Scalar abstraction for the numeric core.
//!
//! Everything numeric is generic over [`Scalar`] so the same kernels serve
//! the f32 training path and the f64 paths (byte-accounting baselines,
//! finite-difference oracles, where f32 rounding would drown the signal).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point element type of tensors: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Dtype code used by the binary containers (f32=0, f64=1).
    const DTYPE_CODE: u8;
    /// Serialized width in bytes.
    const BYTE_WIDTH: usize;
    /// Human-readable dtype name.
    const DTYPE_NAME: &'static str;

    /// Append the little-endian encoding of `self` to `out`.
    fn write_le(self, out: &mut Vec<u8>);
    /// Decode from the first `BYTE_WIDTH` bytes of `bytes`.
    fn read_le(bytes: &[u8]) -> Self;
    /// Raw bit pattern, widened to u64. Used for bit-exact comparisons.
    fn to_bits_u64(self) -> u64;
}

impl Scalar for f32 {
    const DTYPE_CODE: u8 = 0;
    const BYTE_WIDTH: usize = 4;
    const DTYPE_NAME: &'static str = "f32";

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }

    fn to_bits_u64(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Scalar for f64 {
    const DTYPE_CODE: u8 = 1;
    const BYTE_WIDTH: usize = 8;
    const DTYPE_NAME: &'static str = "f64";

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }

    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn lit<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("literal representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn le_round_trip_f32() {
        let mut buf = Vec::new();
        (-1.5f32).write_le(&mut buf);
        assert_eq!(buf.len(), 4);
        assert_eq!(f32::read_le(&buf), -1.5);
    }

    #[test]
    fn le_round_trip_f64() {
        let mut buf = Vec::new();
        std::f64::consts::PI.write_le(&mut buf);
        assert_eq!(buf.len(), 8);
        assert_eq!(f64::read_le(&buf), std::f64::consts::PI);
    }

    #[test]
    fn dtype_codes() {
        assert_eq!(f32::DTYPE_CODE, 0);
        assert_eq!(f64::DTYPE_CODE, 1);
        assert_eq!(f32::BYTE_WIDTH, 4);
        assert_eq!(f64::BYTE_WIDTH, 8);
    }

    #[test]
    fn lit_converts() {
        let x: f32 = lit(0.25);
        assert_eq!(x, 0.25f32);
    }
}
