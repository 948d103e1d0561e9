//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! A [`Tape`] owns every value produced during a forward pass. Operations
//! append nodes in execution order, so the tape is topologically sorted by
//! construction; [`Tape::backward`] walks it once in reverse, seeding the
//! scalar loss with gradient 1 and accumulating into every tracked leaf.
//!
//! Tapes are single-writer: one training step builds one tape, reads the
//! gradients, and drops it.

use crate::linalg;
use crate::rng::SeedRng;
use crate::scalar::{lit, Scalar};
use crate::tensor::{shape_err, Tensor, TensorError};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

/// Pointwise (or row-wise, for softmax) nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
        }
    }
}

/// Convolution padding mode (stride is always 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    Valid,
    Same,
}

/// LSTM layer configuration.
///
/// `cell_activation` is applied to the candidate update and to the cell
/// state on its way out (`h = o * act(c)`); the three gates stay sigmoid.
#[derive(Debug, Clone, Copy)]
pub struct LstmConfig {
    pub units: usize,
    pub return_sequences: bool,
    pub cell_activation: Activation,
}

struct LstmCache<S> {
    i: Vec<S>,
    f: Vec<S>,
    g: Vec<S>,
    o: Vec<S>,
    c: Vec<S>,
    hcell: Vec<S>,
    h: Vec<S>,
}

enum Step<S: Scalar> {
    Leaf,
    /// Value computed from untracked inputs; nothing to propagate.
    NoGrad,
    Dense {
        x: ValueId,
        w: ValueId,
        b: ValueId,
    },
    Conv1d {
        x: ValueId,
        kernels: ValueId,
        bias: ValueId,
        pad_left: usize,
        cols: Vec<S>,
    },
    Conv2d {
        x: ValueId,
        kernels: ValueId,
        bias: ValueId,
        pad: (usize, usize),
        cols: Vec<S>,
    },
    MaxPool1d {
        x: ValueId,
        argmax: Vec<u32>,
    },
    MaxPool2d {
        x: ValueId,
        argmax: Vec<u32>,
    },
    Upsample2d {
        x: ValueId,
        factor: (usize, usize),
    },
    Lstm {
        x: ValueId,
        wx: ValueId,
        wh: ValueId,
        b: ValueId,
        cfg: LstmConfig,
        cache: LstmCache<S>,
    },
    Pointwise {
        x: ValueId,
        kind: Activation,
    },
    Softmax {
        x: ValueId,
    },
    Dropout {
        x: ValueId,
        mask: Vec<S>,
    },
    Reshape {
        x: ValueId,
    },
    Repeat {
        x: ValueId,
        count: usize,
    },
    Sum {
        x: ValueId,
    },
    Mse {
        pred: ValueId,
        target: ValueId,
    },
    Cce {
        probs: ValueId,
        onehot: ValueId,
    },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    needs_grad: bool,
    step: Step<S>,
}

/// Gradients produced by one backward pass, indexed by [`ValueId`].
/// Only leaves retain their buffers; interior gradients are dropped as soon
/// as they have been propagated.
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ValueId) -> Option<&[S]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, id: ValueId) -> Option<Vec<S>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }

    /// Gradient for `id`, densified to zeros when the leaf was never reached.
    pub fn dense(&self, id: ValueId, numel: usize) -> Vec<S> {
        match self.get(id) {
            Some(g) => g.to_vec(),
            None => vec![S::zero(); numel],
        }
    }
}

/// Recorded forward pass; see module docs.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert an input value. Its `requires_grad` flag decides whether
    /// gradients accumulate into it.
    pub fn leaf(&mut self, value: Tensor<S>) -> ValueId {
        let needs = value.requires_grad();
        self.push(value, needs, Step::Leaf)
    }

    pub fn value(&self, id: ValueId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<S>, needs_grad: bool, step: Step<S>) -> ValueId {
        self.nodes.push(Node {
            value,
            needs_grad,
            step,
        });
        ValueId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[ValueId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    // ── Affine / convolution ────────────────────────────────────────────

    /// Fully connected affine map: `out[n,o] = sum_i x[n,i] w[i,o] + b[o]`.
    pub fn dense(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 {
            return Err(shape_err(
                "dense",
                format!("expected x[N,I], w[I,O], b[O]; got {xs:?}, {ws:?}, {bs:?}"),
            ));
        }
        let (n, i) = (xs[0], xs[1]);
        let (wi, o) = (ws[0], ws[1]);
        if i != wi || bs[0] != o {
            return Err(shape_err(
                "dense",
                format!("inner dims disagree: x[.., {i}] vs w[{wi}, {o}] vs b[{}]", bs[0]),
            ));
        }
        let mut out = vec![S::zero(); n * o];
        linalg::matmul(self.value(x).data(), self.value(w).data(), n, i, o, &mut out);
        linalg::add_bias_rows(&mut out, self.value(b).data());
        let value = Tensor::new(&[n, o], out)?;
        let step = if self.needs(&[x, w, b]) {
            Step::Dense { x, w, b }
        } else {
            Step::NoGrad
        };
        let needs = !matches!(step, Step::NoGrad);
        Ok(self.push(value, needs, step))
    }

    /// 1-D convolution over the time axis, stride 1.
    /// `x[N,T,C] * kernels[K,C,F] + bias[F] -> [N,T',F]`.
    pub fn conv1d(
        &mut self,
        x: ValueId,
        kernels: ValueId,
        bias: ValueId,
        padding: Padding,
    ) -> Result<ValueId, TensorError> {
        let xs = self.value(x).shape().to_vec();
        let ks = self.value(kernels).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        if xs.len() != 3 || ks.len() != 3 || bs.len() != 1 {
            return Err(shape_err(
                "conv1d",
                format!("expected x[N,T,C], kernels[K,C,F], bias[F]; got {xs:?}, {ks:?}, {bs:?}"),
            ));
        }
        let (n, t, c) = (xs[0], xs[1], xs[2]);
        let (k, kc, f) = (ks[0], ks[1], ks[2]);
        if kc != c || bs[0] != f {
            return Err(shape_err(
                "conv1d",
                format!("channel dims disagree: x[..,{c}] vs kernels[.., {kc}, {f}] vs bias[{}]", bs[0]),
            ));
        }
        let (t_out, pad_left) = match padding {
            Padding::Valid => {
                if k > t {
                    return Err(shape_err("conv1d", format!("kernel width {k} exceeds length {t}")));
                }
                (t - k + 1, 0)
            }
            Padding::Same => (t, (k - 1) / 2),
        };

        let track = self.needs(&[x, kernels, bias]);
        let xd = self.value(x).data();
        let kd = self.value(kernels).data();
        let col_w = k * c;
        let mut cols = vec![S::zero(); n * t_out * col_w];
        // im2col: cols[(n,t'), k*C + c] = x[n, t' + k - pad_left, c] (0 outside).
        for s in 0..n {
            let x_s = &xd[s * t * c..(s + 1) * t * c];
            let cols_s = &mut cols[s * t_out * col_w..(s + 1) * t_out * col_w];
            for to in 0..t_out {
                for kk in 0..k {
                    let src = to as isize + kk as isize - pad_left as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let src = src as usize;
                    cols_s[to * col_w + kk * c..to * col_w + kk * c + c]
                        .copy_from_slice(&x_s[src * c..src * c + c]);
                }
            }
        }
        let mut out = vec![S::zero(); n * t_out * f];
        linalg::matmul(&cols, kd, n * t_out, col_w, f, &mut out);
        linalg::add_bias_rows(&mut out, self.value(bias).data());
        let value = Tensor::new(&[n, t_out, f], out)?;
        let step = if track {
            Step::Conv1d {
                x,
                kernels,
                bias,
                pad_left,
                cols,
            }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    /// 2-D convolution, stride 1.
    /// `x[N,H,W,C] * kernels[Kh,Kw,C,F] + bias[F] -> [N,H',W',F]`.
    pub fn conv2d(
        &mut self,
        x: ValueId,
        kernels: ValueId,
        bias: ValueId,
        padding: Padding,
    ) -> Result<ValueId, TensorError> {
        let xs = self.value(x).shape().to_vec();
        let ks = self.value(kernels).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        if xs.len() != 4 || ks.len() != 4 || bs.len() != 1 {
            return Err(shape_err(
                "conv2d",
                format!("expected x[N,H,W,C], kernels[Kh,Kw,C,F], bias[F]; got {xs:?}, {ks:?}, {bs:?}"),
            ));
        }
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, kc, f) = (ks[0], ks[1], ks[2], ks[3]);
        if kc != c || bs[0] != f {
            return Err(shape_err(
                "conv2d",
                format!("channel dims disagree: x[..,{c}] vs kernels[..,{kc},{f}] vs bias[{}]", bs[0]),
            ));
        }
        let ((h_out, w_out), pad) = match padding {
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(shape_err(
                        "conv2d",
                        format!("kernel {kh}x{kw} exceeds input {h}x{w}"),
                    ));
                }
                ((h - kh + 1, w - kw + 1), (0, 0))
            }
            Padding::Same => ((h, w), ((kh - 1) / 2, (kw - 1) / 2)),
        };

        let track = self.needs(&[x, kernels, bias]);
        let xd = self.value(x).data();
        let kd = self.value(kernels).data();
        let col_w = kh * kw * c;
        let positions = h_out * w_out;
        let mut cols = vec![S::zero(); n * positions * col_w];
        for s in 0..n {
            let x_s = &xd[s * h * w * c..(s + 1) * h * w * c];
            let cols_s = &mut cols[s * positions * col_w..(s + 1) * positions * col_w];
            for ho in 0..h_out {
                for wo in 0..w_out {
                    let base = (ho * w_out + wo) * col_w;
                    for ih in 0..kh {
                        let src_h = ho as isize + ih as isize - pad.0 as isize;
                        if src_h < 0 || src_h >= h as isize {
                            continue;
                        }
                        for iw in 0..kw {
                            let src_w = wo as isize + iw as isize - pad.1 as isize;
                            if src_w < 0 || src_w >= w as isize {
                                continue;
                            }
                            let src = (src_h as usize * w + src_w as usize) * c;
                            let dst = base + (ih * kw + iw) * c;
                            cols_s[dst..dst + c].copy_from_slice(&x_s[src..src + c]);
                        }
                    }
                }
            }
        }
        let mut out = vec![S::zero(); n * positions * f];
        linalg::matmul(&cols, kd, n * positions, col_w, f, &mut out);
        linalg::add_bias_rows(&mut out, self.value(bias).data());
        let value = Tensor::new(&[n, h_out, w_out, f], out)?;
        let step = if track {
            Step::Conv2d {
                x,
                kernels,
                bias,
                pad,
                cols,
            }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    // ── Pooling / resampling ────────────────────────────────────────────

    /// Max pooling over the time axis of `x[N,T,C]`. A trailing window that
    /// hangs off the end behaves as if padded with negative infinity.
    pub fn max_pool1d(&mut self, x: ValueId, pool: usize) -> Result<ValueId, TensorError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 3 {
            return Err(shape_err("max_pool1d", format!("expected x[N,T,C]; got {xs:?}")));
        }
        if pool == 0 {
            return Err(shape_err("max_pool1d", "window must be positive"));
        }
        let (n, t, c) = (xs[0], xs[1], xs[2]);
        let t_out = t.div_ceil(pool);
        let xd = self.value(x).data();
        let mut out = vec![S::zero(); n * t_out * c];
        let mut argmax = vec![0u32; n * t_out * c];
        for s in 0..n {
            for to in 0..t_out {
                let t_end = ((to + 1) * pool).min(t);
                for ch in 0..c {
                    let mut best = S::neg_infinity();
                    let mut best_idx = 0usize;
                    for ti in to * pool..t_end {
                        let idx = (s * t + ti) * c + ch;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                    let oidx = (s * t_out + to) * c + ch;
                    out[oidx] = best;
                    argmax[oidx] = best_idx as u32;
                }
            }
        }
        let track = self.needs(&[x]);
        let value = Tensor::new(&[n, t_out, c], out)?;
        let step = if track {
            Step::MaxPool1d { x, argmax }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    /// Max pooling over the two spatial axes of `x[N,H,W,C]`.
    pub fn max_pool2d(&mut self, x: ValueId, pool: (usize, usize)) -> Result<ValueId, TensorError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 {
            return Err(shape_err("max_pool2d", format!("expected x[N,H,W,C]; got {xs:?}")));
        }
        if pool.0 == 0 || pool.1 == 0 {
            return Err(shape_err("max_pool2d", "window must be positive"));
        }
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let h_out = h.div_ceil(pool.0);
        let w_out = w.div_ceil(pool.1);
        let xd = self.value(x).data();
        let mut out = vec![S::zero(); n * h_out * w_out * c];
        let mut argmax = vec![0u32; out.len()];
        for s in 0..n {
            for ho in 0..h_out {
                let h_end = ((ho + 1) * pool.0).min(h);
                for wo in 0..w_out {
                    let w_end = ((wo + 1) * pool.1).min(w);
                    for ch in 0..c {
                        let mut best = S::neg_infinity();
                        let mut best_idx = 0usize;
                        for hi in ho * pool.0..h_end {
                            for wi in wo * pool.1..w_end {
                                let idx = ((s * h + hi) * w + wi) * c + ch;
                                if xd[idx] > best {
                                    best = xd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let oidx = ((s * h_out + ho) * w_out + wo) * c + ch;
                        out[oidx] = best;
                        argmax[oidx] = best_idx as u32;
                    }
                }
            }
        }
        let track = self.needs(&[x]);
        let value = Tensor::new(&[n, h_out, w_out, c], out)?;
        let step = if track {
            Step::MaxPool2d { x, argmax }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    /// Nearest-neighbour upsampling of `x[N,H,W,C]` by integer factors.
    pub fn upsample2d(&mut self, x: ValueId, factor: (usize, usize)) -> Result<ValueId, TensorError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 {
            return Err(shape_err("upsample2d", format!("expected x[N,H,W,C]; got {xs:?}")));
        }
        if factor.0 == 0 || factor.1 == 0 {
            return Err(shape_err("upsample2d", "factor must be positive"));
        }
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (fh, fw) = factor;
        let xd = self.value(x).data();
        let mut out = vec![S::zero(); n * h * fh * w * fw * c];
        let w_out = w * fw;
        for s in 0..n {
            for hi in 0..h {
                for wi in 0..w {
                    let src = ((s * h + hi) * w + wi) * c;
                    for rh in 0..fh {
                        let ho = hi * fh + rh;
                        for rw in 0..fw {
                            let wo = wi * fw + rw;
                            let dst = ((s * h * fh + ho) * w_out + wo) * c;
                            out[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                        }
                    }
                }
            }
        }
        let track = self.needs(&[x]);
        let value = Tensor::new(&[n, h * fh, w_out, c], out)?;
        let step = if track {
            Step::Upsample2d { x, factor }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    // ── Recurrence ──────────────────────────────────────────────────────

    /// LSTM over `x[N,T,C]` with fused gate weights.
    ///
    /// `wx[C,4U]`, `wh[U,4U]`, `b[4U]`, gate order `i, f, g, o`. Returns the
    /// full hidden sequence `[N,T,U]` or the final state `[N,U]`.
    pub fn lstm(
        &mut self,
        x: ValueId,
        wx: ValueId,
        wh: ValueId,
        b: ValueId,
        cfg: LstmConfig,
    ) -> Result<ValueId, TensorError> {
        if !matches!(cfg.cell_activation, Activation::Tanh | Activation::Relu) {
            return Err(TensorError::Contract(format!(
                "lstm cell activation must be tanh or relu, got {}",
                cfg.cell_activation.name()
            )));
        }
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 3 {
            return Err(shape_err("lstm", format!("expected x[N,T,C]; got {xs:?}")));
        }
        let (n, t, c) = (xs[0], xs[1], xs[2]);
        let u = cfg.units;
        let gates = 4 * u;
        if self.value(wx).shape() != [c, gates]
            || self.value(wh).shape() != [u, gates]
            || self.value(b).shape() != [gates]
        {
            return Err(shape_err(
                "lstm",
                format!(
                    "weights sized for (C={c}, units={u}) required; got wx{:?} wh{:?} b{:?}",
                    self.value(wx).shape(),
                    self.value(wh).shape(),
                    self.value(b).shape()
                ),
            ));
        }

        let xd = self.value(x).data();
        let wxd = self.value(wx).data();
        let whd = self.value(wh).data();
        let bd = self.value(b).data();
        let relu_cell = matches!(cfg.cell_activation, Activation::Relu);

        // Time-major copy of x so each step's slab is contiguous.
        let mut x_tn = vec![S::zero(); t * n * c];
        for s in 0..n {
            for ti in 0..t {
                x_tn[(ti * n + s) * c..(ti * n + s) * c + c]
                    .copy_from_slice(&xd[(s * t + ti) * c..(s * t + ti) * c + c]);
            }
        }
        // Input contributions for every step in one pass.
        let mut xw = vec![S::zero(); t * n * gates];
        linalg::matmul(&x_tn, wxd, t * n, c, gates, &mut xw);

        let plane = n * u;
        let mut cache = LstmCache {
            i: vec![S::zero(); t * plane],
            f: vec![S::zero(); t * plane],
            g: vec![S::zero(); t * plane],
            o: vec![S::zero(); t * plane],
            c: vec![S::zero(); t * plane],
            hcell: vec![S::zero(); t * plane],
            h: vec![S::zero(); t * plane],
        };
        let mut z = vec![S::zero(); n * gates];
        for ti in 0..t {
            z.copy_from_slice(&xw[ti * n * gates..(ti + 1) * n * gates]);
            if ti > 0 {
                let h_prev = &cache.h[(ti - 1) * plane..ti * plane];
                linalg::matmul_acc(h_prev, whd, n, u, gates, &mut z);
            }
            linalg::add_bias_rows(&mut z, bd);

            let base = ti * plane;
            for s in 0..n {
                let zr = &z[s * gates..(s + 1) * gates];
                for uu in 0..u {
                    let idx = base + s * u + uu;
                    let ig = sigmoid(zr[uu]);
                    let fg = sigmoid(zr[u + uu]);
                    let gg = if relu_cell {
                        relu(zr[2 * u + uu])
                    } else {
                        zr[2 * u + uu].tanh()
                    };
                    let og = sigmoid(zr[3 * u + uu]);
                    let c_prev = if ti > 0 {
                        cache.c[idx - plane]
                    } else {
                        S::zero()
                    };
                    let cc = fg * c_prev + ig * gg;
                    let hc = if relu_cell { relu(cc) } else { cc.tanh() };
                    cache.i[idx] = ig;
                    cache.f[idx] = fg;
                    cache.g[idx] = gg;
                    cache.o[idx] = og;
                    cache.c[idx] = cc;
                    cache.hcell[idx] = hc;
                    cache.h[idx] = og * hc;
                }
            }
            let h_t = &cache.h[base..base + plane];
            if h_t.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite {
                    op: "lstm",
                    detail: Some(format!("hidden state at step {ti}")),
                });
            }
        }

        let value = if cfg.return_sequences {
            let mut out = vec![S::zero(); n * t * u];
            for s in 0..n {
                for ti in 0..t {
                    out[(s * t + ti) * u..(s * t + ti) * u + u]
                        .copy_from_slice(&cache.h[(ti * n + s) * u..(ti * n + s) * u + u]);
                }
            }
            Tensor::new(&[n, t, u], out)?
        } else {
            Tensor::new(&[n, u], cache.h[(t - 1) * plane..].to_vec())?
        };

        let track = self.needs(&[x, wx, wh, b]);
        let step = if track {
            Step::Lstm {
                x,
                wx,
                wh,
                b,
                cfg,
                cache,
            }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    // ── Pointwise / structural ──────────────────────────────────────────

    /// Apply an activation. `Linear` is a no-op returning the input id;
    /// `Softmax` normalizes over the last axis.
    pub fn activation(&mut self, x: ValueId, kind: Activation) -> Result<ValueId, TensorError> {
        match kind {
            Activation::Linear => Ok(x),
            Activation::Softmax => self.softmax(x),
            Activation::Relu | Activation::Sigmoid | Activation::Tanh => {
                let xv = self.value(x);
                let data = xv
                    .data()
                    .iter()
                    .map(|&v| match kind {
                        Activation::Relu => relu(v),
                        Activation::Sigmoid => sigmoid(v),
                        Activation::Tanh => v.tanh(),
                        _ => unreachable!(),
                    })
                    .collect();
                let value = Tensor::new(xv.shape(), data)?;
                let track = self.needs(&[x]);
                let step = if track {
                    Step::Pointwise { x, kind }
                } else {
                    Step::NoGrad
                };
                Ok(self.push(value, track, step))
            }
        }
    }

    fn softmax(&mut self, x: ValueId) -> Result<ValueId, TensorError> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(shape_err("softmax", "rank-0 input"));
        }
        let k = *xv.shape().last().unwrap();
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(k) {
            let mut max = S::neg_infinity();
            for &v in row.iter() {
                if v > max {
                    max = v;
                }
            }
            let mut sum = S::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let value = Tensor::new(xv.shape(), data)?;
        let track = self.needs(&[x]);
        let step = if track { Step::Softmax { x } } else { Step::NoGrad };
        Ok(self.push(value, track, step))
    }

    /// Inverted dropout: training=true zeroes each element with probability
    /// `rate` and scales survivors by `1/(1-rate)`; otherwise the identity.
    pub fn dropout(
        &mut self,
        x: ValueId,
        rate: f64,
        training: bool,
        rng: &mut SeedRng,
    ) -> Result<ValueId, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Contract(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale: S = lit(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<S> = (0..xv.numel())
            .map(|_| if rng.f64_unit() < rate { S::zero() } else { keep_scale })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(xv.shape(), data)?;
        let track = self.needs(&[x]);
        let step = if track {
            Step::Dropout { x, mask }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    /// View the value under a new shape (element count preserved).
    pub fn reshape(&mut self, x: ValueId, shape: &[usize]) -> Result<ValueId, TensorError> {
        let value = self.value(x).reshape(shape)?;
        let track = self.needs(&[x]);
        let step = if track { Step::Reshape { x } } else { Step::NoGrad };
        Ok(self.push(value, track, step))
    }

    /// Repeat each trailing-axis vector `count` times along a new axis:
    /// `[..., D] -> [..., count, D]`.
    pub fn repeat(&mut self, x: ValueId, count: usize) -> Result<ValueId, TensorError> {
        if count == 0 {
            return Err(shape_err("repeat", "count must be positive"));
        }
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(shape_err("repeat", "rank-0 input"));
        }
        let d = *xv.shape().last().unwrap();
        let rows = xv.numel() / d;
        let mut out = Vec::with_capacity(xv.numel() * count);
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            for _ in 0..count {
                out.extend_from_slice(row);
            }
        }
        let mut shape = xv.shape().to_vec();
        shape.insert(shape.len() - 1, count);
        let value = Tensor::new(&shape, out)?;
        let track = self.needs(&[x]);
        let step = if track {
            Step::Repeat { x, count }
        } else {
            Step::NoGrad
        };
        Ok(self.push(value, track, step))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let total = linalg::sum_slice(self.value(x).data());
        let track = self.needs(&[x]);
        let step = if track { Step::Sum { x } } else { Step::NoGrad };
        self.push(Tensor::scalar(total), track, step)
    }

    // ── Losses ──────────────────────────────────────────────────────────

    /// Mean squared error over all elements, as a rank-0 tensor.
    pub fn mse(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId, TensorError> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(shape_err(
                "mse",
                format!("shape mismatch: {:?} vs {:?}", p.shape(), t.shape()),
            ));
        }
        let numel: S = lit(p.numel() as f64);
        let mut acc = [S::zero(); 8];
        for (chunk_p, chunk_t) in p.data().chunks(8).zip(t.data().chunks(8)) {
            for ((&a, &b), lane) in chunk_p.iter().zip(chunk_t).zip(acc.iter_mut()) {
                let d = a - b;
                *lane = d.mul_add(d, *lane);
            }
        }
        let mut total = S::zero();
        for lane in acc {
            total += lane;
        }
        let loss = total / numel;
        if !loss.is_finite() {
            return Err(TensorError::NonFinite { op: "mse", detail: None });
        }
        let track = self.needs(&[pred, target]);
        let step = if track { Step::Mse { pred, target } } else { Step::NoGrad };
        Ok(self.push(Tensor::scalar(loss), track, step))
    }

    /// Categorical cross-entropy of probability rows against one-hot rows.
    /// Rows of `probs` must sum to 1 within 1e-5; probabilities are clamped
    /// to `[1e-7, 1 - 1e-7]` before the log.
    pub fn categorical_cross_entropy(
        &mut self,
        probs: ValueId,
        onehot: ValueId,
    ) -> Result<ValueId, TensorError> {
        let (p, y) = (self.value(probs), self.value(onehot));
        if p.shape() != y.shape() || p.rank() != 2 {
            return Err(shape_err(
                "categorical_cross_entropy",
                format!("expected matching [N,K]; got {:?} vs {:?}", p.shape(), y.shape()),
            ));
        }
        let (n, k) = (p.shape()[0], p.shape()[1]);
        let tol: S = lit(1e-5);
        for (row_idx, row) in p.data().chunks_exact(k).enumerate() {
            let sum = linalg::sum_slice(row);
            if (sum - S::one()).abs() > tol {
                return Err(TensorError::Contract(format!(
                    "probability row {row_idx} sums to {sum}, expected 1 within 1e-5"
                )));
            }
        }
        let lo: S = lit(1e-7);
        let hi: S = S::one() - lo;
        let mut total = S::zero();
        for (&pv, &yv) in p.data().iter().zip(y.data()) {
            if yv != S::zero() {
                total += yv * clamp(pv, lo, hi).ln();
            }
        }
        let loss = -total / lit::<S>(n as f64);
        if !loss.is_finite() {
            return Err(TensorError::NonFinite {
                op: "categorical_cross_entropy",
                detail: None,
            });
        }
        let track = self.needs(&[probs, onehot]);
        let step = if track {
            Step::Cce { probs, onehot }
        } else {
            Step::NoGrad
        };
        Ok(self.push(Tensor::scalar(loss), track, step))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Returns gradients for every tracked
    /// leaf; untouched leaves report `None` (zero gradient).
    pub fn backward(&self, loss: ValueId) -> Result<Gradients<S>, TensorError> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss; got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() {
                continue;
            }
            if matches!(self.nodes[idx].step, Step::Leaf) {
                continue;
            }
            let g = grads[idx].take().expect("present");
            self.propagate(idx, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: ValueId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<S>>], id: ValueId) -> &'a mut Vec<S> {
        let numel = self.nodes[id.0].value.numel();
        grads[id.0].get_or_insert_with(|| vec![S::zero(); numel])
    }

    fn propagate(&self, idx: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        match &self.nodes[idx].step {
            Step::Leaf | Step::NoGrad => {}
            Step::Dense { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, i) = (xv.shape()[0], xv.shape()[1]);
                let o = wv.shape()[1];
                if self.wants(*x) {
                    let wt = linalg::transpose(wv.data(), i, o);
                    let mut dx = vec![S::zero(); n * i];
                    linalg::matmul(g, &wt, n, o, i, &mut dx);
                    add_assign(self.slot(grads, *x), &dx);
                }
                if self.wants(*w) {
                    let xt = linalg::transpose(xv.data(), n, i);
                    linalg::matmul_acc(&xt, g, i, n, o, self.slot(grads, *w));
                }
                if self.wants(*b) {
                    linalg::col_sum_acc(g, o, self.slot(grads, *b));
                }
            }
            Step::Conv1d {
                x,
                kernels,
                bias,
                pad_left,
                cols,
            } => {
                let xv = self.value(*x);
                let kv = self.value(*kernels);
                let (n, t, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let (k, f) = (kv.shape()[0], kv.shape()[2]);
                let t_out = self.nodes[idx].value.shape()[1];
                let col_w = k * c;
                if self.wants(*kernels) {
                    let ct = linalg::transpose(cols, n * t_out, col_w);
                    linalg::matmul_acc(&ct, g, col_w, n * t_out, f, self.slot(grads, *kernels));
                }
                if self.wants(*bias) {
                    linalg::col_sum_acc(g, f, self.slot(grads, *bias));
                }
                if self.wants(*x) {
                    let kt = linalg::transpose(kv.data(), col_w, f);
                    let mut dcols = vec![S::zero(); n * t_out * col_w];
                    linalg::matmul(g, &kt, n * t_out, f, col_w, &mut dcols);
                    let dx = self.slot(grads, *x);
                    for s in 0..n {
                        for to in 0..t_out {
                            let row = &dcols[(s * t_out + to) * col_w..(s * t_out + to + 1) * col_w];
                            for kk in 0..k {
                                let src = to as isize + kk as isize - *pad_left as isize;
                                if src < 0 || src >= t as isize {
                                    continue;
                                }
                                let base = (s * t + src as usize) * c;
                                axpy_noalias(&mut dx[base..base + c], &row[kk * c..kk * c + c]);
                            }
                        }
                    }
                }
            }
            Step::Conv2d {
                x,
                kernels,
                bias,
                pad,
                cols,
            } => {
                let xv = self.value(*x);
                let kv = self.value(*kernels);
                let (n, h, w, c) = (
                    xv.shape()[0],
                    xv.shape()[1],
                    xv.shape()[2],
                    xv.shape()[3],
                );
                let (kh, kw, f) = (kv.shape()[0], kv.shape()[1], kv.shape()[3]);
                let out_shape = self.nodes[idx].value.shape();
                let (h_out, w_out) = (out_shape[1], out_shape[2]);
                let positions = h_out * w_out;
                let col_w = kh * kw * c;
                if self.wants(*kernels) {
                    let ct = linalg::transpose(cols, n * positions, col_w);
                    linalg::matmul_acc(&ct, g, col_w, n * positions, f, self.slot(grads, *kernels));
                }
                if self.wants(*bias) {
                    linalg::col_sum_acc(g, f, self.slot(grads, *bias));
                }
                if self.wants(*x) {
                    let kt = linalg::transpose(kv.data(), col_w, f);
                    let mut dcols = vec![S::zero(); n * positions * col_w];
                    linalg::matmul(g, &kt, n * positions, f, col_w, &mut dcols);
                    let dx = self.slot(grads, *x);
                    for s in 0..n {
                        for ho in 0..h_out {
                            for wo in 0..w_out {
                                let row_base = ((s * h_out + ho) * w_out + wo) * col_w;
                                for ih in 0..kh {
                                    let src_h = ho as isize + ih as isize - pad.0 as isize;
                                    if src_h < 0 || src_h >= h as isize {
                                        continue;
                                    }
                                    for iw in 0..kw {
                                        let src_w = wo as isize + iw as isize - pad.1 as isize;
                                        if src_w < 0 || src_w >= w as isize {
                                            continue;
                                        }
                                        let dst =
                                            ((s * h + src_h as usize) * w + src_w as usize) * c;
                                        let src = row_base + (ih * kw + iw) * c;
                                        axpy_noalias(
                                            &mut dx[dst..dst + c],
                                            &dcols[src..src + c],
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Step::MaxPool1d { x, argmax } | Step::MaxPool2d { x, argmax } => {
                if self.wants(*x) {
                    let dx = self.slot(grads, *x);
                    for (gi, &src) in g.iter().zip(argmax) {
                        dx[src as usize] += *gi;
                    }
                }
            }
            Step::Upsample2d { x, factor } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let (n, h, w, c) = (
                        xv.shape()[0],
                        xv.shape()[1],
                        xv.shape()[2],
                        xv.shape()[3],
                    );
                    let (fh, fw) = *factor;
                    let w_out = w * fw;
                    let dx = self.slot(grads, *x);
                    for s in 0..n {
                        for hi in 0..h {
                            for wi in 0..w {
                                let dst = ((s * h + hi) * w + wi) * c;
                                for rh in 0..fh {
                                    for rw in 0..fw {
                                        let src = ((s * h * fh + hi * fh + rh) * w_out
                                            + wi * fw
                                            + rw)
                                            * c;
                                        axpy_noalias(&mut dx[dst..dst + c], &g[src..src + c]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Step::Lstm {
                x,
                wx,
                wh,
                b,
                cfg,
                cache,
            } => self.lstm_backward(idx, g, grads, *x, *wx, *wh, *b, cfg, cache),
            Step::Pointwise { x, kind } => {
                if self.wants(*x) {
                    let y = self.nodes[idx].value.data();
                    let xd = self.value(*x).data();
                    let dx = self.slot(grads, *x);
                    match kind {
                        Activation::Relu => {
                            for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                                if yi > S::zero() {
                                    *d += gi;
                                }
                            }
                        }
                        Activation::Sigmoid => {
                            for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                                *d += gi * yi * (S::one() - yi);
                            }
                        }
                        Activation::Tanh => {
                            for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                                *d += gi * (S::one() - yi * yi);
                            }
                        }
                        _ => {
                            let _ = xd;
                            unreachable!("pointwise covers relu/sigmoid/tanh")
                        }
                    }
                }
            }
            Step::Softmax { x } => {
                if self.wants(*x) {
                    let y = self.nodes[idx].value.data();
                    let k = *self.nodes[idx].value.shape().last().unwrap();
                    let dx = self.slot(grads, *x);
                    for ((dx_row, g_row), y_row) in dx
                        .chunks_exact_mut(k)
                        .zip(g.chunks_exact(k))
                        .zip(y.chunks_exact(k))
                    {
                        let mut dot = S::zero();
                        for (&gi, &yi) in g_row.iter().zip(y_row) {
                            dot += gi * yi;
                        }
                        for ((d, &gi), &yi) in dx_row.iter_mut().zip(g_row).zip(y_row) {
                            *d += yi * (gi - dot);
                        }
                    }
                }
            }
            Step::Dropout { x, mask } => {
                if self.wants(*x) {
                    let dx = self.slot(grads, *x);
                    for ((d, &gi), &m) in dx.iter_mut().zip(g).zip(mask) {
                        *d += gi * m;
                    }
                }
            }
            Step::Reshape { x } => {
                if self.wants(*x) {
                    add_assign(self.slot(grads, *x), g);
                }
            }
            Step::Repeat { x, count } => {
                if self.wants(*x) {
                    let d = *self.value(*x).shape().last().unwrap();
                    let rows = self.value(*x).numel() / d;
                    let dx = self.slot(grads, *x);
                    for r in 0..rows {
                        for rep in 0..*count {
                            let src = (r * count + rep) * d;
                            axpy_noalias(&mut dx[r * d..(r + 1) * d], &g[src..src + d]);
                        }
                    }
                }
            }
            Step::Sum { x } => {
                if self.wants(*x) {
                    let gi = g[0];
                    for d in self.slot(grads, *x).iter_mut() {
                        *d += gi;
                    }
                }
            }
            Step::Mse { pred, target } => {
                let pv = self.value(*pred);
                let tv = self.value(*target);
                let scale = g[0] * lit::<S>(2.0) / lit::<S>(pv.numel() as f64);
                if self.wants(*pred) {
                    let dp = self.slot(grads, *pred);
                    for ((d, &p), &t) in dp.iter_mut().zip(pv.data()).zip(tv.data()) {
                        *d += scale * (p - t);
                    }
                }
                if self.wants(*target) {
                    let dt = self.slot(grads, *target);
                    for ((d, &p), &t) in dt.iter_mut().zip(pv.data()).zip(tv.data()) {
                        *d -= scale * (p - t);
                    }
                }
            }
            Step::Cce { probs, onehot } => {
                let pv = self.value(*probs);
                let yv = self.value(*onehot);
                let n: S = lit(pv.shape()[0] as f64);
                let lo: S = lit(1e-7);
                let hi = S::one() - lo;
                let scale = g[0] / n;
                if self.wants(*probs) {
                    let dp = self.slot(grads, *probs);
                    for ((d, &p), &y) in dp.iter_mut().zip(pv.data()).zip(yv.data()) {
                        // The clamp has zero slope outside its range.
                        if y != S::zero() && p > lo && p < hi {
                            *d -= scale * y / p;
                        }
                    }
                }
                if self.wants(*onehot) {
                    let dy = self.slot(grads, *onehot);
                    for ((d, &p), _) in dy.iter_mut().zip(pv.data()).zip(yv.data()) {
                        *d -= scale * clamp(p, lo, hi).ln();
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        idx: usize,
        g: &[S],
        grads: &mut [Option<Vec<S>>],
        x: ValueId,
        wx: ValueId,
        wh: ValueId,
        b: ValueId,
        cfg: &LstmConfig,
        cache: &LstmCache<S>,
    ) {
        let xv = self.value(x);
        let (n, t, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let u = cfg.units;
        let gates = 4 * u;
        let plane = n * u;
        let relu_cell = matches!(cfg.cell_activation, Activation::Relu);
        let ret_seq = cfg.return_sequences;

        let whd = self.value(wh).data();
        let wht = linalg::transpose(whd, u, gates);

        let mut dz_all = vec![S::zero(); t * n * gates];
        let mut dh = vec![S::zero(); plane];
        let mut dc = vec![S::zero(); plane];
        let mut dh_rec = vec![S::zero(); plane];

        for ti in (0..t).rev() {
            // Upstream gradient for this step's hidden state.
            if ret_seq {
                for s in 0..n {
                    for uu in 0..u {
                        dh[s * u + uu] += g[(s * t + ti) * u + uu];
                    }
                }
            } else if ti == t - 1 {
                add_assign(&mut dh, g);
            }

            let base = ti * plane;
            let dz = &mut dz_all[ti * n * gates..(ti + 1) * n * gates];
            for s in 0..n {
                for uu in 0..u {
                    let k = base + s * u + uu;
                    let (ig, fg, gg, og) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k]);
                    let (cc, hc) = (cache.c[k], cache.hcell[k]);
                    let c_prev = if ti > 0 { cache.c[k - plane] } else { S::zero() };
                    let dh_k = dh[s * u + uu];

                    let dzo = dh_k * hc * og * (S::one() - og);
                    let dact = if relu_cell {
                        if cc > S::zero() {
                            S::one()
                        } else {
                            S::zero()
                        }
                    } else {
                        S::one() - hc * hc
                    };
                    let dcell = dc[s * u + uu] + dh_k * og * dact;
                    let dzi = dcell * gg * ig * (S::one() - ig);
                    let dzf = dcell * c_prev * fg * (S::one() - fg);
                    let dgate = if relu_cell {
                        if gg > S::zero() {
                            S::one()
                        } else {
                            S::zero()
                        }
                    } else {
                        S::one() - gg * gg
                    };
                    let dzg = dcell * ig * dgate;

                    dc[s * u + uu] = dcell * fg;
                    let zr = &mut dz[s * gates..(s + 1) * gates];
                    zr[uu] = dzi;
                    zr[u + uu] = dzf;
                    zr[2 * u + uu] = dzg;
                    zr[3 * u + uu] = dzo;
                }
            }
            // Gradient flowing to the previous hidden state.
            linalg::matmul(dz, &wht, n, gates, u, &mut dh_rec);
            std::mem::swap(&mut dh, &mut dh_rec);
        }

        if self.wants(b) {
            linalg::col_sum_acc(&dz_all, gates, self.slot(grads, b));
        }
        if self.wants(wx) {
            // Rebuild the time-major input layout used in forward.
            let xd = xv.data();
            let mut x_tn = vec![S::zero(); t * n * c];
            for s in 0..n {
                for ti in 0..t {
                    x_tn[(ti * n + s) * c..(ti * n + s) * c + c]
                        .copy_from_slice(&xd[(s * t + ti) * c..(s * t + ti) * c + c]);
                }
            }
            let xt = linalg::transpose(&x_tn, t * n, c);
            linalg::matmul_acc(&xt, &dz_all, c, t * n, gates, self.slot(grads, wx));
        }
        if self.wants(wh) {
            // h shifted one step forward: row (t,n) holds h[t-1,n], zeros at t=0.
            let mut h_prev = vec![S::zero(); t * plane];
            h_prev[plane..].copy_from_slice(&cache.h[..(t - 1) * plane]);
            let ht = linalg::transpose(&h_prev, t * n, u);
            linalg::matmul_acc(&ht, &dz_all, u, t * n, gates, self.slot(grads, wh));
        }
        if self.wants(x) {
            let wxd = self.value(wx).data();
            let wxt = linalg::transpose(wxd, c, gates);
            let mut dx_tn = vec![S::zero(); t * n * c];
            linalg::matmul(&dz_all, &wxt, t * n, gates, c, &mut dx_tn);
            let dx = self.slot(grads, x);
            for s in 0..n {
                for ti in 0..t {
                    axpy_noalias(
                        &mut dx[(s * t + ti) * c..(s * t + ti) * c + c],
                        &dx_tn[(ti * n + s) * c..(ti * n + s) * c + c],
                    );
                }
            }
        }
        let _ = idx;
    }
}

#[inline]
fn sigmoid<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

#[inline]
fn relu<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        v
    } else {
        S::zero()
    }
}

#[inline]
fn clamp<S: Scalar>(v: S, lo: S, hi: S) -> S {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn add_assign<S: Scalar>(dst: &mut [S], src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `dst += src` for disjoint slices (same as add_assign; named for intent at
/// scatter sites).
#[inline]
fn axpy_noalias<S: Scalar>(dst: &mut [S], src: &[S]) {
    add_assign(dst, src);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape<f32>, shape: &[usize], data: Vec<f32>, grad: bool) -> ValueId {
        tape.leaf(Tensor::new(shape, data).unwrap().with_requires_grad(grad))
    }

    #[test]
    fn dense_identity_weights() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![1.0, 2.0], false);
        let w = leaf(&mut tape, &[2, 2], vec![1.0, 0.0, 0.0, 1.0], false);
        let b = leaf(&mut tape, &[2], vec![0.0, 0.0], false);
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_zero_weights_pass_bias() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![1.0, 2.0], false);
        let w = leaf(&mut tape, &[2, 2], vec![0.0; 4], false);
        let b = leaf(&mut tape, &[2], vec![3.0, 4.0], false);
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn dense_hand_sum() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![1.0, 2.0], false);
        let w = leaf(&mut tape, &[2, 2], vec![1.0, 1.0, 1.0, 1.0], false);
        let b = leaf(&mut tape, &[2], vec![0.0, 1.0], false);
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn dense_shape_mismatch_errors() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 3], vec![0.0; 3], false);
        let w = leaf(&mut tape, &[2, 2], vec![0.0; 4], false);
        let b = leaf(&mut tape, &[2], vec![0.0; 2], false);
        assert!(matches!(tape.dense(x, w, b), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn conv1d_direct_sum_oracle() {
        // x=[1,2,3,4] one channel, kernel [1,0,-1], valid -> [-2,-2]
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0], false);
        let k = leaf(&mut tape, &[3, 1, 1], vec![1.0, 0.0, -1.0], false);
        let b = leaf(&mut tape, &[1], vec![0.0], false);
        let y = tape.conv1d(x, k, b, Padding::Valid).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 1]);
        assert_eq!(tape.value(y).data(), &[-2.0, -2.0]);
    }

    #[test]
    fn conv1d_width_one_identity() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 4, 1], vec![0.5, -1.0, 2.0, 7.0], false);
        let k = leaf(&mut tape, &[1, 1, 1], vec![1.0], false);
        let b = leaf(&mut tape, &[1], vec![0.0], false);
        let y = tape.conv1d(x, k, b, Padding::Valid).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn conv1d_zero_input_passes_bias() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 5, 1], vec![0.0; 5], false);
        let k = leaf(&mut tape, &[3, 1, 1], vec![1.0, 2.0, 3.0], false);
        let b = leaf(&mut tape, &[1], vec![0.5], false);
        let y = tape.conv1d(x, k, b, Padding::Same).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn conv1d_kernel_too_wide_errors() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2, 1], vec![0.0; 2], false);
        let k = leaf(&mut tape, &[3, 1, 1], vec![0.0; 3], false);
        let b = leaf(&mut tape, &[1], vec![0.0], false);
        assert!(tape.conv1d(x, k, b, Padding::Valid).is_err());
    }

    #[test]
    fn conv2d_one_by_one_identity() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0], false);
        let k = leaf(&mut tape, &[1, 1, 1, 1], vec![1.0], false);
        let b = leaf(&mut tape, &[1], vec![0.0], false);
        let y = tape.conv2d(x, k, b, Padding::Valid).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn conv2d_all_ones_sum_oracle() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0], false);
        let k = leaf(&mut tape, &[2, 2, 1, 1], vec![1.0; 4], false);
        let b = leaf(&mut tape, &[1], vec![0.0], false);
        let y = tape.conv2d(x, k, b, Padding::Valid).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[10.0]);
    }

    #[test]
    fn conv2d_zero_kernels_constant_bias() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 3, 3, 2], (0..18).map(|v| v as f32).collect(), false);
        let k = leaf(&mut tape, &[3, 3, 2, 4], vec![0.0; 72], false);
        let b = leaf(&mut tape, &[4], vec![1.0, 2.0, 3.0, 4.0], false);
        let y = tape.conv2d(x, k, b, Padding::Same).unwrap();
        for row in tape.value(y).data().chunks_exact(4) {
            assert_eq!(row, &[1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn max_pool1d_brute_force_oracle() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 4, 1], vec![1.0, 3.0, 2.0, 4.0], false);
        let y = tape.max_pool1d(x, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn max_pool_constant_input() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 6, 3], vec![0.25; 36], false);
        let y = tape.max_pool1d(x, 3).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn max_pool2d_brute_force_oracle() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0], false);
        let y = tape.max_pool2d(x, (2, 2)).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[4.0]);
    }

    #[test]
    fn max_pool_gradient_mass_conserved() {
        let mut tape = Tape::new();
        let x = leaf(
            &mut tape,
            &[1, 5, 2],
            vec![0.1, 1.0, 0.3, 0.2, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            true,
        );
        let y = tape.max_pool1d(x, 2).unwrap(); // odd axis: -inf padding path
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        let dx = grads.get(x).unwrap();
        let incoming = tape.value(y).numel() as f32;
        let routed: f32 = dx.iter().sum();
        assert_eq!(routed, incoming);
    }

    #[test]
    fn max_pool_backward_first_max_on_ties() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2, 1], vec![0.7, 0.7], true);
        let y = tape.max_pool1d(x, 2).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn upsample_repeats_blocks() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 1, 1, 1], vec![1.0], false);
        let y = tape.upsample2d(x, (2, 2)).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 2, 1]);
        assert_eq!(tape.value(y).data(), &[1.0; 4]);

        let x2 = leaf(&mut tape, &[1, 1, 2, 1], vec![1.0, 2.0], false);
        let y2 = tape.upsample2d(x2, (2, 1)).unwrap();
        assert_eq!(tape.value(y2).shape(), &[1, 2, 2, 1]);
        assert_eq!(tape.value(y2).data(), &[1.0, 2.0, 1.0, 2.0]);

        let y3 = tape.upsample2d(x2, (1, 1)).unwrap();
        assert_eq!(tape.value(y3).data(), tape.value(x2).data());
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 1, 2, 1], vec![1.0, 2.0], true);
        let y = tape.upsample2d(x, (2, 1)).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 2.0]);
    }

    fn lstm_weights(tape: &mut Tape<f32>, c: usize, u: usize, fill: f32) -> (ValueId, ValueId, ValueId) {
        let wx = leaf(tape, &[c, 4 * u], vec![fill; c * 4 * u], false);
        let wh = leaf(tape, &[u, 4 * u], vec![fill; u * 4 * u], false);
        let b = leaf(tape, &[4 * u], vec![0.0; 4 * u], false);
        (wx, wh, b)
    }

    #[test]
    fn lstm_zero_weights_zero_output() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3, 2], vec![0.7; 12], false);
        let (wx, wh, b) = lstm_weights(&mut tape, 2, 4, 0.0);
        let cfg = LstmConfig {
            units: 4,
            return_sequences: true,
            cell_activation: Activation::Tanh,
        };
        let y = tape.lstm(x, wx, wh, b, cfg).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    /// Standalone single-step cell, written independently of the tape op.
    fn hand_cell(x: &[f32], wx: &[f32], wh: &[f32], b: &[f32], c_dim: usize, u: usize) -> Vec<f32> {
        let sig = |v: f32| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0f32; u];
        for uu in 0..u {
            let mut z = [b[uu], b[u + uu], b[2 * u + uu], b[3 * u + uu]];
            for ci in 0..c_dim {
                z[0] += x[ci] * wx[ci * 4 * u + uu];
                z[1] += x[ci] * wx[ci * 4 * u + u + uu];
                z[2] += x[ci] * wx[ci * 4 * u + 2 * u + uu];
                z[3] += x[ci] * wx[ci * 4 * u + 3 * u + uu];
            }
            let (i, f, g, o) = (sig(z[0]), sig(z[1]), z[2].tanh(), sig(z[3]));
            let c = f * 0.0 + i * g;
            h[uu] = o * c.tanh();
        }
        h
    }

    #[test]
    fn lstm_single_step_matches_hand_cell() {
        let mut tape = Tape::new();
        let x_data = vec![0.3f32, -0.8];
        let x = leaf(&mut tape, &[1, 1, 2], x_data.clone(), false);
        let mut rng = crate::rng::SeedRng::new(5, 0);
        let wx_data: Vec<f32> = (0..2 * 12).map(|_| rng.f64_in(-0.5, 0.5) as f32).collect();
        let wh_data: Vec<f32> = (0..3 * 12).map(|_| rng.f64_in(-0.5, 0.5) as f32).collect();
        let b_data: Vec<f32> = (0..12).map(|_| rng.f64_in(-0.5, 0.5) as f32).collect();
        let wx = leaf(&mut tape, &[2, 12], wx_data.clone(), false);
        let wh = leaf(&mut tape, &[3, 12], wh_data.clone(), false);
        let b = leaf(&mut tape, &[12], b_data.clone(), false);
        let cfg = LstmConfig {
            units: 3,
            return_sequences: false,
            cell_activation: Activation::Tanh,
        };
        let y = tape.lstm(x, wx, wh, b, cfg).unwrap();
        let want = hand_cell(&x_data, &wx_data, &wh_data, &b_data, 2, 3);
        for (a, w) in tape.value(y).data().iter().zip(&want) {
            assert!((a - w).abs() < 1e-6, "{a} vs {w}");
        }
    }

    #[test]
    fn lstm_last_of_sequence_equals_final_state() {
        let mut tape = Tape::new();
        let mut rng = crate::rng::SeedRng::new(9, 0);
        let x_data: Vec<f32> = (0..2 * 5 * 3).map(|_| rng.f64_in(-1.0, 1.0) as f32).collect();
        let x = leaf(&mut tape, &[2, 5, 3], x_data, false);
        let wx_data: Vec<f32> = (0..3 * 16).map(|_| rng.f64_in(-0.4, 0.4) as f32).collect();
        let wh_data: Vec<f32> = (0..4 * 16).map(|_| rng.f64_in(-0.4, 0.4) as f32).collect();
        let b_data: Vec<f32> = (0..16).map(|_| rng.f64_in(-0.2, 0.2) as f32).collect();
        let wx = leaf(&mut tape, &[3, 16], wx_data.clone(), false);
        let wh = leaf(&mut tape, &[4, 16], wh_data.clone(), false);
        let b = leaf(&mut tape, &[16], b_data.clone(), false);
        let seq = tape
            .lstm(x, wx, wh, b, LstmConfig { units: 4, return_sequences: true, cell_activation: Activation::Tanh })
            .unwrap();
        let last = tape
            .lstm(x, wx, wh, b, LstmConfig { units: 4, return_sequences: false, cell_activation: Activation::Tanh })
            .unwrap();
        for s in 0..2 {
            for uu in 0..4 {
                assert_eq!(
                    tape.value(seq).at(&[s, 4, uu]).to_bits(),
                    tape.value(last).at(&[s, uu]).to_bits()
                );
            }
        }
    }

    #[test]
    fn activations_spot_values() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3], vec![-1.0, 0.0, 2.0], false);
        let y = tape.activation(x, Activation::Relu).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

        let z = leaf(&mut tape, &[1], vec![0.0], false);
        let s = tape.activation(z, Activation::Sigmoid).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);

        let p = leaf(&mut tape, &[1, 2], vec![0.0, 0.0], false);
        let sm = tape.activation(p, Activation::Softmax).unwrap();
        assert_eq!(tape.value(sm).data(), &[0.5, 0.5]);

        let l = tape.activation(x, Activation::Linear).unwrap();
        assert_eq!(l, x);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let mut rng = crate::rng::SeedRng::new(3, 0);
        let x = leaf(
            &mut tape,
            &[4, 6],
            (0..24).map(|_| rng.f64_in(-5.0, 5.0) as f32).collect(),
            false,
        );
        let y = tape.activation(x, Activation::Softmax).unwrap();
        for row in tape.value(y).data().chunks_exact(6) {
            let sum: f32 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = crate::rng::SeedRng::new(1, 0);
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[4], vec![1.0, 2.0, 3.0, 4.0], false);
        let off = tape.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(off, x);
        let zero_rate = tape.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(zero_rate, x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean_within_five_percent() {
        let mut rng = crate::rng::SeedRng::new(42, 0);
        let mut tape = Tape::new();
        let n = 20_000;
        let x = leaf(&mut tape, &[n], vec![1.0; n], false);
        let y = tape.dropout(x, 0.5, true, &mut rng).unwrap();
        let mean: f32 = tape.value(y).data().iter().sum::<f32>() / n as f32;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn mse_hand_values() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2], vec![0.0, 0.0], false);
        let b = leaf(&mut tape, &[2], vec![1.0, 1.0], false);
        let l = tape.mse(a, b).unwrap();
        assert_eq!(tape.value(l).data()[0], 1.0);

        let c = leaf(&mut tape, &[1], vec![2.0], false);
        let d = leaf(&mut tape, &[1], vec![0.0], false);
        let l2 = tape.mse(c, d).unwrap();
        assert_eq!(tape.value(l2).data()[0], 4.0);

        let l3 = tape.mse(a, a).unwrap();
        assert_eq!(tape.value(l3).data()[0], 0.0);
    }

    #[test]
    fn cce_closed_forms() {
        let mut tape = Tape::<f64>::new();
        // Exact one-hot prediction: loss ~ 0 after clamping.
        let p = tape.leaf(Tensor::new(&[1, 3], vec![1.0, 0.0, 0.0]).unwrap());
        let y = tape.leaf(Tensor::new(&[1, 3], vec![1.0, 0.0, 0.0]).unwrap());
        let l = tape.categorical_cross_entropy(p, y).unwrap();
        assert!(tape.value(l).data()[0].abs() <= 1e-6);

        // Uniform over 6 classes: ln 6.
        let p6 = tape.leaf(Tensor::new(&[1, 6], vec![1.0 / 6.0; 6]).unwrap());
        let y6 = tape.leaf(Tensor::new(&[1, 6], vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap());
        let l6 = tape.categorical_cross_entropy(p6, y6).unwrap();
        assert!((tape.value(l6).data()[0] - 6.0f64.ln()).abs() < 1e-9);

        // Fifty-fifty, true class 0: ln 2.
        let p2 = tape.leaf(Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap());
        let y2 = tape.leaf(Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap());
        let l2 = tape.categorical_cross_entropy(p2, y2).unwrap();
        assert!((tape.value(l2).data()[0] - 2.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn cce_rejects_unnormalized_rows() {
        let mut tape = Tape::<f32>::new();
        let p = tape.leaf(Tensor::new(&[1, 2], vec![0.9, 0.3]).unwrap());
        let y = tape.leaf(Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap());
        assert!(matches!(
            tape.categorical_cross_entropy(p, y),
            Err(TensorError::Contract(_))
        ));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3], vec![5.0; 6], true);
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_disconnected_leaf_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1.0, 2.0], true);
        let unused = leaf(&mut tape, &[2], vec![3.0, 4.0], true);
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.dense(unused, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1.0, 2.0], true);
        assert!(matches!(tape.backward(x), Err(TensorError::Contract(_))));
    }

    #[test]
    fn repeat_vector_and_backward() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![1.0, 2.0], true);
        let y = tape.repeat(x, 3).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3, 2]);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn reshape_passes_gradient_through() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3], vec![1.0; 6], true);
        let y = tape.reshape(x, &[3, 2]).unwrap();
        assert_eq!(tape.value(y).shape(), &[3, 2]);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn forward_is_deterministic_bitwise() {
        let run = || {
            let mut rng = crate::rng::SeedRng::new(77, 0);
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(Tensor::uniform(&[3, 6, 2], -1.0, 1.0, &mut rng));
            let k = tape.leaf(Tensor::uniform(&[3, 2, 4], -1.0, 1.0, &mut rng));
            let b = tape.leaf(Tensor::uniform(&[4], -1.0, 1.0, &mut rng));
            let y = tape.conv1d(x, k, b, Padding::Same).unwrap();
            let a = tape.activation(y, Activation::Sigmoid).unwrap();
            tape.value(a).clone()
        };
        assert!(run().bit_eq(&run()));
    }
}
