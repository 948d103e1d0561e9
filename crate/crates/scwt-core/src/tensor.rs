//! Dense row-major tensors.
//!
//! A [`Tensor`] is an immutable value: the payload sits behind an `Arc`, so
//! clones and reshapes are cheap and tensors are safe to share across
//! threads. Gradients, when present, are a same-shape buffer attached by the
//! training loop after a backward pass.

use std::sync::Arc;

use thiserror::Error;

use crate::rng::SeedRng;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite values produced by {op}{}", detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    NonFinite {
        op: &'static str,
        detail: Option<String>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape {
        op,
        detail: detail.into(),
    }
}

/// N-dimensional array of scalars, row-major, immutable payload.
#[derive(Debug, Clone)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
    requires_grad: bool,
    grad: Option<Arc<Vec<S>>>,
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor, checking that `product(shape) == data.len()` and that
    /// every dimension is positive.
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(shape_err("tensor::new", format!("zero dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_err(
                "tensor::new",
                format!("shape {shape:?} implies {numel} elements, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(shape, vec![S::zero(); numel]).expect("zeros shape")
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(shape, vec![S::one(); numel]).expect("ones shape")
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(shape, vec![value; numel]).expect("filled shape")
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: S) -> Self {
        Self::new(&[], vec![value]).expect("scalar shape")
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(shape, (0..numel).map(&mut f).collect()).expect("from_fn shape")
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut SeedRng) -> Self {
        Self::from_fn(shape, |_| crate::scalar::lit(rng.f64_in(lo, hi)))
    }

    /// Glorot-uniform initialization: `U(-l, l)` with `l = sqrt(6/(fan_in+fan_out))`.
    pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut SeedRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::uniform(shape, -limit, limit, rng)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn with_requires_grad(mut self, value: bool) -> Self {
        self.requires_grad = value;
        self
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref().map(|g| g.as_slice())
    }

    /// Attach a gradient buffer; must match the tensor's element count.
    pub fn set_grad(&mut self, grad: Vec<S>) -> Result<(), TensorError> {
        if grad.len() != self.numel() {
            return Err(shape_err(
                "tensor::set_grad",
                format!("gradient length {} vs {} elements", grad.len(), self.numel()),
            ));
        }
        self.grad = Some(Arc::new(grad));
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same payload, new shape. Element count must be preserved.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(shape_err("tensor::reshape", format!("zero dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(shape_err(
                "tensor::reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
            requires_grad: self.requires_grad,
            grad: None,
        })
    }

    /// Mutate the payload in place, copying only if it is shared.
    pub(crate) fn data_mut(&mut self) -> &mut [S] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// Value at a multi-dimensional index. Intended for tests and small reads.
    pub fn at(&self, index: &[usize]) -> S {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        let mut flat = 0usize;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of bounds for axis {i} ({dim})");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    pub fn is_finite_all(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Exact bit equality of shape and payload.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }

    /// Convert the payload to another scalar type (through f64).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let data = self
            .data
            .iter()
            .map(|v| T::from_f64(v.to_f64().expect("finite cast")).expect("cast"))
            .collect();
        Tensor::new(&self.shape, data).expect("cast keeps shape")
    }

    /// Copy of the contiguous row range `lo..hi` along axis 0.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Result<Self, TensorError> {
        if self.rank() == 0 || lo >= hi || hi > self.shape[0] {
            return Err(shape_err(
                "tensor::slice_rows",
                format!("range {lo}..{hi} invalid for shape {:?}", self.shape),
            ));
        }
        let row = self.numel() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = hi - lo;
        Self::new(&shape, self.data[lo * row..hi * row].to_vec())
    }

    /// Copy out the rows selected by `indices` along axis 0.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self, TensorError> {
        if self.rank() == 0 {
            return Err(shape_err("tensor::gather_rows", "rank-0 tensor has no rows"));
        }
        let row = self.numel() / self.shape[0];
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(shape_err(
                    "tensor::gather_rows",
                    format!("row {i} out of bounds ({})", self.shape[0]),
                ));
            }
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self::new(&shape, data)
    }

    /// Concatenate along axis 0. All inputs must agree on the trailing dims.
    pub fn concat_rows(parts: &[Tensor<S>]) -> Result<Self, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("tensor::concat_rows", "no parts"))?;
        let tail = &first.shape[1..];
        let mut rows = 0usize;
        let mut data = Vec::new();
        for p in parts {
            if p.rank() == 0 || &p.shape[1..] != tail {
                return Err(shape_err(
                    "tensor::concat_rows",
                    format!("incompatible part shape {:?} vs {:?}", p.shape, first.shape),
                ));
            }
            rows += p.shape[0];
            data.extend_from_slice(p.data());
        }
        let mut shape = first.shape.clone();
        shape[0] = rows;
        Self::new(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_validates_shape() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn scalar_is_rank_zero() {
        let t = Tensor::scalar(2.5f32);
        assert_eq!(t.rank(), 0);
        assert_eq!(t.numel(), 1);
        assert_eq!(t.data()[0], 2.5);
    }

    #[test]
    fn reshape_round_trip_is_identity() {
        let t = Tensor::<f32>::from_fn(&[2, 6], |i| i as f32);
        let r = t.reshape(&[3, 4]).unwrap().reshape(&[2, 6]).unwrap();
        assert!(t.bit_eq(&r));
        assert!(t.reshape(&[5]).is_err());
    }

    #[test]
    fn at_indexes_row_major() {
        let t = Tensor::<f32>::from_fn(&[2, 3], |i| i as f32);
        assert_eq!(t.at(&[0, 0]), 0.0);
        assert_eq!(t.at(&[1, 2]), 5.0);
    }

    #[test]
    fn gather_and_concat_rows() {
        let t = Tensor::<f32>::from_fn(&[4, 2], |i| i as f32);
        let g = t.gather_rows(&[3, 1]).unwrap();
        assert_eq!(g.shape(), &[2, 2]);
        assert_eq!(g.data(), &[6.0, 7.0, 2.0, 3.0]);
        let c = Tensor::concat_rows(&[g.clone(), g]).unwrap();
        assert_eq!(c.shape(), &[4, 2]);
    }

    #[test]
    fn cast_f32_f64_round_trip_exact() {
        let t = Tensor::<f32>::from_fn(&[3], |i| (i as f32) * 0.1);
        let back: Tensor<f32> = t.cast::<f64>().cast();
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn grad_shape_checked() {
        let mut t = Tensor::<f32>::zeros(&[2, 2]);
        assert!(t.set_grad(vec![1.0; 3]).is_err());
        assert!(t.set_grad(vec![1.0; 4]).is_ok());
        assert_eq!(t.grad().unwrap().len(), 4);
    }
}
