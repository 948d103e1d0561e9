//! Flat row-major kernels behind the tensor ops.
//!
//! Inner loops run over contiguous slices so LLVM can vectorize them; all
//! reductions use a fixed evaluation order, which keeps results bit-identical
//! from run to run.

use crate::scalar::Scalar;

/// `y[i] += alpha * x[i]`
#[inline]
pub fn axpy<S: Scalar>(y: &mut [S], alpha: S, x: &[S]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = alpha.mul_add(xi, *yi);
    }
}

/// `out = A(m,k) . B(k,n)`, overwriting `out`.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(S::zero());
    matmul_acc(a, b, m, k, n, out);
}

/// `out += A(m,k) . B(k,n)`.
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    // Two output rows per pass halve the traffic over B.
    let mut i = 0;
    while i + 2 <= m {
        let (row0, row1) = {
            let (head, tail) = out[i * n..].split_at_mut(n);
            (head, &mut tail[..n])
        };
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let c0 = a0[p];
            let c1 = a1[p];
            for j in 0..n {
                row0[j] = c0.mul_add(b_row[j], row0[j]);
                row1[j] = c1.mul_add(b_row[j], row1[j]);
            }
        }
        i += 2;
    }
    if i < m {
        let row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for p in 0..k {
            axpy(row, a_row[p], &b[p * n..(p + 1) * n]);
        }
    }
}

/// Row-major transpose of an `(rows, cols)` matrix.
pub fn transpose<S: Scalar>(a: &[S], rows: usize, cols: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![S::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Add `bias` (length n) to every row of the `(rows, n)` matrix.
pub fn add_bias_rows<S: Scalar>(out: &mut [S], bias: &[S]) {
    let n = bias.len();
    debug_assert_eq!(out.len() % n, 0);
    for row in out.chunks_exact_mut(n) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// `out[j] += sum_r a[r, j]` for an `(rows, n)` matrix.
pub fn col_sum_acc<S: Scalar>(a: &[S], n: usize, out: &mut [S]) {
    debug_assert_eq!(out.len(), n);
    for row in a.chunks_exact(n) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Sum with eight independent accumulators. Fixed evaluation order (so runs
/// are reproducible) with less rounding drift than a single running total.
pub fn sum_slice<S: Scalar>(x: &[S]) -> S {
    let mut lanes = [S::zero(); 8];
    let mut chunks = x.chunks_exact(8);
    for chunk in &mut chunks {
        for (lane, &v) in lanes.iter_mut().zip(chunk) {
            *lane += v;
        }
    }
    let mut total = S::zero();
    for lane in lanes {
        total += lane;
    }
    for &v in chunks.remainder() {
        total += v;
    }
    total
}
