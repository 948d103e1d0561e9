//! Layer stacks: specification, shape inference, initialization, forward
//! execution on a tape, and the five concrete architectures used by the
//! compression study (four autoencoders plus the validation classifier).

use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tape::{Activation, LstmConfig, Padding, Tape, ValueId};
use crate::tensor::{shape_err, Tensor, TensorError};

/// One layer of a [`ModelGraph`]. Shapes below are per sample (no batch dim).
///
/// `Dense` applies to the trailing axis; `TimeDistributed` applies its inner
/// layer independently to every slice along the first per-sample axis.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        units: usize,
        activation: Activation,
    },
    Conv1d {
        filters: usize,
        kernel: usize,
        padding: Padding,
        activation: Activation,
    },
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        padding: Padding,
        activation: Activation,
    },
    MaxPool1d {
        pool: usize,
    },
    MaxPool2d {
        pool: (usize, usize),
    },
    Upsample2d {
        factor: (usize, usize),
    },
    Lstm {
        units: usize,
        return_sequences: bool,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
    Repeat {
        count: usize,
    },
    TimeDistributed(Box<LayerSpec>),
}

impl LayerSpec {
    /// Per-sample output shape for a per-sample input shape.
    fn infer_shape(&self, input: &[usize]) -> Result<Vec<usize>, TensorError> {
        match self {
            LayerSpec::Dense { units, .. } => {
                if input.is_empty() {
                    return Err(shape_err("dense", "needs at least one axis"));
                }
                let mut out = input.to_vec();
                *out.last_mut().unwrap() = *units;
                Ok(out)
            }
            LayerSpec::Conv1d { filters, kernel, padding, .. } => {
                if input.len() != 2 {
                    return Err(shape_err("conv1d", format!("expected [T,C], got {input:?}")));
                }
                let t = match padding {
                    Padding::Valid => {
                        if *kernel > input[0] {
                            return Err(shape_err("conv1d", "kernel exceeds input length"));
                        }
                        input[0] - kernel + 1
                    }
                    Padding::Same => input[0],
                };
                Ok(vec![t, *filters])
            }
            LayerSpec::Conv2d { filters, kernel, padding, .. } => {
                if input.len() != 3 {
                    return Err(shape_err("conv2d", format!("expected [H,W,C], got {input:?}")));
                }
                let (h, w) = match padding {
                    Padding::Valid => {
                        if kernel.0 > input[0] || kernel.1 > input[1] {
                            return Err(shape_err("conv2d", "kernel exceeds input extent"));
                        }
                        (input[0] - kernel.0 + 1, input[1] - kernel.1 + 1)
                    }
                    Padding::Same => (input[0], input[1]),
                };
                Ok(vec![h, w, *filters])
            }
            LayerSpec::MaxPool1d { pool } => {
                if input.len() != 2 {
                    return Err(shape_err("max_pool1d", format!("expected [T,C], got {input:?}")));
                }
                Ok(vec![input[0].div_ceil(*pool), input[1]])
            }
            LayerSpec::MaxPool2d { pool } => {
                if input.len() != 3 {
                    return Err(shape_err("max_pool2d", format!("expected [H,W,C], got {input:?}")));
                }
                Ok(vec![input[0].div_ceil(pool.0), input[1].div_ceil(pool.1), input[2]])
            }
            LayerSpec::Upsample2d { factor } => {
                if input.len() != 3 {
                    return Err(shape_err("upsample2d", format!("expected [H,W,C], got {input:?}")));
                }
                Ok(vec![input[0] * factor.0, input[1] * factor.1, input[2]])
            }
            LayerSpec::Lstm { units, return_sequences, activation } => {
                if input.len() != 2 {
                    return Err(shape_err("lstm", format!("expected [T,C], got {input:?}")));
                }
                if !matches!(activation, Activation::Tanh | Activation::Relu) {
                    return Err(TensorError::Contract(
                        "lstm activation must be tanh or relu".into(),
                    ));
                }
                if *return_sequences {
                    Ok(vec![input[0], *units])
                } else {
                    Ok(vec![*units])
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(TensorError::Contract(format!(
                        "dropout rate must be in [0,1), got {rate}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                let have: usize = input.iter().product();
                let want: usize = shape.iter().product();
                if have != want {
                    return Err(shape_err(
                        "reshape",
                        format!("cannot reshape {input:?} into {shape:?}"),
                    ));
                }
                Ok(shape.clone())
            }
            LayerSpec::Repeat { count } => {
                if input.is_empty() {
                    return Err(shape_err("repeat", "needs at least one axis"));
                }
                let mut out = input.to_vec();
                out.insert(out.len() - 1, *count);
                Ok(out)
            }
            LayerSpec::TimeDistributed(inner) => {
                if input.len() < 2 {
                    return Err(shape_err(
                        "time_distributed",
                        format!("expected at least [S, ...], got {input:?}"),
                    ));
                }
                let mut out = vec![input[0]];
                out.extend(inner.infer_shape(&input[1..])?);
                Ok(out)
            }
        }
    }

    /// Initialize this layer's parameters for the given per-sample input.
    fn init_params<S: Scalar>(&self, input: &[usize], rng: &mut SeedRng) -> Vec<Tensor<S>> {
        match self {
            LayerSpec::Dense { units, .. } => {
                let i = *input.last().unwrap();
                vec![
                    Tensor::glorot_uniform(&[i, *units], i, *units, rng),
                    Tensor::zeros(&[*units]),
                ]
            }
            LayerSpec::Conv1d { filters, kernel, .. } => {
                let c = input[1];
                vec![
                    Tensor::glorot_uniform(&[*kernel, c, *filters], kernel * c, kernel * filters, rng),
                    Tensor::zeros(&[*filters]),
                ]
            }
            LayerSpec::Conv2d { filters, kernel, .. } => {
                let c = input[2];
                let rf = kernel.0 * kernel.1;
                vec![
                    Tensor::glorot_uniform(&[kernel.0, kernel.1, c, *filters], rf * c, rf * filters, rng),
                    Tensor::zeros(&[*filters]),
                ]
            }
            LayerSpec::Lstm { units, .. } => {
                let c = input[1];
                let u = *units;
                // Forget-gate bias starts at 1, the rest at 0.
                let mut bias = vec![S::zero(); 4 * u];
                for b in bias.iter_mut().take(2 * u).skip(u) {
                    *b = S::one();
                }
                vec![
                    Tensor::glorot_uniform(&[c, 4 * u], c, 4 * u, rng),
                    orthogonal_recurrent(u, rng),
                    Tensor::new(&[4 * u], bias).expect("bias shape"),
                ]
            }
            LayerSpec::TimeDistributed(inner) => inner.init_params(&input[1..], rng),
            _ => Vec::new(),
        }
    }

    /// Stable byte encoding for architecture fingerprints.
    fn encode(&self, out: &mut Vec<u8>) {
        fn push_usize(out: &mut Vec<u8>, v: usize) {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        fn act_code(a: Activation) -> u8 {
            match a {
                Activation::Relu => 0,
                Activation::Sigmoid => 1,
                Activation::Softmax => 2,
                Activation::Linear => 3,
                Activation::Tanh => 4,
            }
        }
        fn pad_code(p: Padding) -> u8 {
            match p {
                Padding::Valid => 0,
                Padding::Same => 1,
            }
        }
        match self {
            LayerSpec::Dense { units, activation } => {
                out.push(0);
                push_usize(out, *units);
                out.push(act_code(*activation));
            }
            LayerSpec::Conv1d { filters, kernel, padding, activation } => {
                out.push(1);
                push_usize(out, *filters);
                push_usize(out, *kernel);
                out.push(pad_code(*padding));
                out.push(act_code(*activation));
            }
            LayerSpec::Conv2d { filters, kernel, padding, activation } => {
                out.push(2);
                push_usize(out, *filters);
                push_usize(out, kernel.0);
                push_usize(out, kernel.1);
                out.push(pad_code(*padding));
                out.push(act_code(*activation));
            }
            LayerSpec::MaxPool1d { pool } => {
                out.push(3);
                push_usize(out, *pool);
            }
            LayerSpec::MaxPool2d { pool } => {
                out.push(4);
                push_usize(out, pool.0);
                push_usize(out, pool.1);
            }
            LayerSpec::Upsample2d { factor } => {
                out.push(5);
                push_usize(out, factor.0);
                push_usize(out, factor.1);
            }
            LayerSpec::Lstm { units, return_sequences, activation } => {
                out.push(6);
                push_usize(out, *units);
                out.push(u8::from(*return_sequences));
                out.push(act_code(*activation));
            }
            LayerSpec::Dropout { rate } => {
                out.push(7);
                out.extend_from_slice(&rate.to_bits().to_le_bytes());
            }
            LayerSpec::Flatten => out.push(8),
            LayerSpec::Reshape { shape } => {
                out.push(9);
                push_usize(out, shape.len());
                for &d in shape {
                    push_usize(out, d);
                }
            }
            LayerSpec::Repeat { count } => {
                out.push(10);
                push_usize(out, *count);
            }
            LayerSpec::TimeDistributed(inner) => {
                out.push(11);
                inner.encode(out);
            }
        }
    }
}

struct Layer<S: Scalar> {
    spec: LayerSpec,
    params: Vec<Tensor<S>>,
}

/// An ordered layer stack with weights and, for autoencoders, the index
/// separating encoder from decoder.
pub struct ModelGraph<S: Scalar> {
    layers: Vec<Layer<S>>,
    input_shape: Vec<usize>,
    /// `layer_inputs[i]` is the per-sample input shape of layer `i`;
    /// the final entry is the output shape.
    layer_inputs: Vec<Vec<usize>>,
    boundary: Option<usize>,
}

impl<S: Scalar> ModelGraph<S> {
    /// Compose a stack, checking that adjacent shapes agree and initializing
    /// all weights from `rng`.
    pub fn new(
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        boundary: Option<usize>,
        rng: &mut SeedRng,
    ) -> Result<Self, TensorError> {
        if let Some(b) = boundary {
            if b == 0 || b >= specs.len() {
                return Err(TensorError::Contract(format!(
                    "encoder boundary {b} outside 1..{}",
                    specs.len()
                )));
            }
        }
        let mut layer_inputs = vec![input_shape.to_vec()];
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let params = spec.init_params(&shape, rng);
            shape = spec.infer_shape(&shape)?;
            layers.push(Layer { spec, params });
            layer_inputs.push(shape.clone());
        }
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
            layer_inputs,
            boundary,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layer_inputs.last().unwrap()
    }

    pub fn boundary(&self) -> Option<usize> {
        self.boundary
    }

    /// Per-sample shape of the encoder output. Autoencoders only.
    pub fn latent_shape(&self) -> Option<&[usize]> {
        self.boundary.map(|b| self.layer_inputs[b].as_slice())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn specs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().map(|l| &l.spec)
    }

    pub fn params(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().flat_map(|l| l.params.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params.iter())
            .map(|p| p.numel())
            .sum()
    }

    /// FNV-1a hash of the architecture: input shape, layer specs, boundary.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.input_shape.len() as u64).to_le_bytes());
        for &d in &self.input_shape {
            bytes.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for layer in &self.layers {
            layer.spec.encode(&mut bytes);
        }
        bytes.extend_from_slice(&(self.boundary.map_or(u64::MAX, |b| b as u64)).to_le_bytes());
        fnv1a64(&bytes)
    }

    /// Run layers `range` on an already-inserted tape value. Returns the
    /// output id plus the leaf ids of every parameter used (for gradient
    /// extraction), in `params()` order restricted to the range.
    pub fn forward_range_on_tape(
        &self,
        tape: &mut Tape<S>,
        x: ValueId,
        range: std::ops::Range<usize>,
        training: bool,
        mut rng: Option<&mut SeedRng>,
        track_params: bool,
    ) -> Result<(ValueId, Vec<ValueId>), TensorError> {
        let expect = &self.layer_inputs[range.start];
        let got = tape.value(x).shape();
        if got.len() != expect.len() + 1 || &got[1..] != expect.as_slice() {
            return Err(shape_err(
                "model::forward",
                format!("expected batch of {expect:?} samples, got {got:?}"),
            ));
        }
        let mut param_ids = Vec::new();
        let mut cur = x;
        for layer in &self.layers[range] {
            let ids: Vec<ValueId> = layer
                .params
                .iter()
                .map(|p| tape.leaf(p.clone().with_requires_grad(track_params)))
                .collect();
            cur = apply_spec(tape, &layer.spec, &ids, cur, training, rng.as_deref_mut())?;
            param_ids.extend(ids);
        }
        Ok((cur, param_ids))
    }

    /// Full forward pass. See [`Self::forward_range_on_tape`].
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<S>,
        x: ValueId,
        training: bool,
        rng: Option<&mut SeedRng>,
        track_params: bool,
    ) -> Result<(ValueId, Vec<ValueId>), TensorError> {
        self.forward_range_on_tape(tape, x, 0..self.layers.len(), training, rng, track_params)
    }

    fn run_range(
        &self,
        x: &Tensor<S>,
        range: std::ops::Range<usize>,
        batch_rows: usize,
    ) -> Result<Tensor<S>, TensorError> {
        let rows = x.shape()[0];
        let step = batch_rows.max(1);
        let mut parts = Vec::with_capacity(rows.div_ceil(step));
        let mut lo = 0;
        while lo < rows {
            let hi = (lo + step).min(rows);
            let chunk = x.slice_rows(lo, hi)?;
            let mut tape = Tape::new();
            let id = tape.leaf(chunk);
            let (out, _) = self.forward_range_on_tape(&mut tape, id, range.clone(), false, None, false)?;
            parts.push(tape.value(out).clone());
            lo = hi;
        }
        Tensor::concat_rows(&parts)
    }

    /// Inference over all layers, processed `batch_rows` rows at a time.
    pub fn predict(&self, x: &Tensor<S>, batch_rows: usize) -> Result<Tensor<S>, TensorError> {
        self.run_range(x, 0..self.layers.len(), batch_rows)
    }

    /// Encoder half (layers before the boundary).
    pub fn encode(&self, x: &Tensor<S>, batch_rows: usize) -> Result<Tensor<S>, TensorError> {
        let b = self.require_boundary()?;
        self.run_range(x, 0..b, batch_rows)
    }

    /// Decoder half (layers from the boundary on).
    pub fn decode(&self, z: &Tensor<S>, batch_rows: usize) -> Result<Tensor<S>, TensorError> {
        let b = self.require_boundary()?;
        self.run_range(z, b..self.layers.len(), batch_rows)
    }

    fn require_boundary(&self) -> Result<usize, TensorError> {
        self.boundary.ok_or_else(|| {
            TensorError::Contract("model has no encoder/decoder boundary".into())
        })
    }
}

fn apply_spec<S: Scalar>(
    tape: &mut Tape<S>,
    spec: &LayerSpec,
    params: &[ValueId],
    x: ValueId,
    training: bool,
    rng: Option<&mut SeedRng>,
) -> Result<ValueId, TensorError> {
    match spec {
        LayerSpec::Dense { units, activation } => {
            let in_shape = tape.value(x).shape().to_vec();
            let i = *in_shape.last().unwrap();
            let rows: usize = in_shape.iter().rev().skip(1).product();
            let flat = if in_shape.len() == 2 {
                x
            } else {
                tape.reshape(x, &[rows, i])?
            };
            let y = tape.dense(flat, params[0], params[1])?;
            let y = tape.activation(y, *activation)?;
            if in_shape.len() == 2 {
                Ok(y)
            } else {
                let mut out_shape = in_shape;
                *out_shape.last_mut().unwrap() = *units;
                tape.reshape(y, &out_shape)
            }
        }
        LayerSpec::Conv1d { padding, activation, .. } => {
            let y = tape.conv1d(x, params[0], params[1], *padding)?;
            tape.activation(y, *activation)
        }
        LayerSpec::Conv2d { padding, activation, .. } => {
            let y = tape.conv2d(x, params[0], params[1], *padding)?;
            tape.activation(y, *activation)
        }
        LayerSpec::MaxPool1d { pool } => tape.max_pool1d(x, *pool),
        LayerSpec::MaxPool2d { pool } => tape.max_pool2d(x, *pool),
        LayerSpec::Upsample2d { factor } => tape.upsample2d(x, *factor),
        LayerSpec::Lstm { units, return_sequences, activation } => tape.lstm(
            x,
            params[0],
            params[1],
            params[2],
            LstmConfig {
                units: *units,
                return_sequences: *return_sequences,
                cell_activation: *activation,
            },
        ),
        LayerSpec::Dropout { rate } => match rng {
            Some(rng) => tape.dropout(x, *rate, training, rng),
            None if !training => Ok(x),
            None => Err(TensorError::Contract(
                "training dropout requires a seeded rng".into(),
            )),
        },
        LayerSpec::Flatten => {
            let shape = tape.value(x).shape();
            let n = shape[0];
            let rest: usize = shape[1..].iter().product();
            tape.reshape(x, &[n, rest])
        }
        LayerSpec::Reshape { shape } => {
            let n = tape.value(x).shape()[0];
            let mut target = Vec::with_capacity(shape.len() + 1);
            target.push(n);
            target.extend_from_slice(shape);
            tape.reshape(x, &target)
        }
        LayerSpec::Repeat { count } => tape.repeat(x, *count),
        LayerSpec::TimeDistributed(inner) => {
            let shape = tape.value(x).shape().to_vec();
            if shape.len() < 3 {
                return Err(shape_err(
                    "time_distributed",
                    format!("expected batch of [S, ...] samples, got {shape:?}"),
                ));
            }
            let (n, s) = (shape[0], shape[1]);
            let mut merged = vec![n * s];
            merged.extend_from_slice(&shape[2..]);
            let folded = tape.reshape(x, &merged)?;
            let y = apply_spec(tape, inner, params, folded, training, rng)?;
            let y_shape = tape.value(y).shape().to_vec();
            let mut split = vec![n, s];
            split.extend_from_slice(&y_shape[1..]);
            tape.reshape(y, &split)
        }
    }
}

/// Recurrent kernel `[U, 4U]` built from one orthogonal block per gate.
/// Orthogonal recurrence keeps each gate's feedback at unit spectral norm,
/// the usual convention for LSTM kernels.
fn orthogonal_recurrent<S: Scalar>(units: usize, rng: &mut SeedRng) -> Tensor<S> {
    let mut data = vec![S::zero(); units * 4 * units];
    for gate in 0..4 {
        let block = orthogonal_block(units, rng);
        for r in 0..units {
            for c in 0..units {
                data[r * 4 * units + gate * units + c] = crate::scalar::lit(block[r * units + c]);
            }
        }
    }
    Tensor::new(&[units, 4 * units], data).expect("recurrent kernel shape")
}

/// Random orthogonal `n x n` matrix: Gaussian sample, then modified
/// Gram-Schmidt on the columns (re-orthogonalized once).
fn orthogonal_block(n: usize, rng: &mut SeedRng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    for _pass in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let mut dot = 0.0;
                for r in 0..n {
                    dot += m[r * n + j] * m[r * n + k];
                }
                for r in 0..n {
                    m[r * n + j] -= dot * m[r * n + k];
                }
            }
            let mut norm = 0.0;
            for r in 0..n {
                norm += m[r * n + j] * m[r * n + j];
            }
            let norm = norm.sqrt().max(1e-12);
            for r in 0..n {
                m[r * n + j] /= norm;
            }
        }
    }
    m
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

// ── Concrete architectures ──────────────────────────────────────────────

/// Flattened-window MLP autoencoder: 1152 -> 512/256/128/64/32 -> latent 32,
/// mirrored decoder ending in a sigmoid back to 1152.
pub fn build_mlp_ae<S: Scalar>(rng: &mut SeedRng) -> ModelGraph<S> {
    let relu = Activation::Relu;
    let mut specs: Vec<LayerSpec> = [512, 256, 128, 64, 32]
        .into_iter()
        .map(|units| LayerSpec::Dense { units, activation: relu })
        .collect();
    for units in [64, 128, 256, 512] {
        specs.push(LayerSpec::Dense { units, activation: relu });
    }
    specs.push(LayerSpec::Dense {
        units: 1152,
        activation: Activation::Sigmoid,
    });
    ModelGraph::new(&[1152], specs, Some(5), rng).expect("static architecture")
}

/// Convolutional autoencoder over windows shaped [128, 9, 1]; 3x3 kernels,
/// same padding, pooling and upsampling restricted to the time axis so the
/// nine-channel axis survives both halves intact. Latent: [32, 9, 64].
pub fn build_conv_ae<S: Scalar>(rng: &mut SeedRng) -> ModelGraph<S> {
    let relu = Activation::Relu;
    let conv = |filters, activation| LayerSpec::Conv2d {
        filters,
        kernel: (3, 3),
        padding: Padding::Same,
        activation,
    };
    let specs = vec![
        conv(16, relu),
        LayerSpec::MaxPool2d { pool: (2, 1) },
        conv(32, relu),
        LayerSpec::MaxPool2d { pool: (2, 1) },
        conv(64, relu),
        conv(64, relu),
        LayerSpec::Upsample2d { factor: (2, 1) },
        conv(32, relu),
        LayerSpec::Upsample2d { factor: (2, 1) },
        conv(16, relu),
        conv(1, Activation::Linear),
    ];
    ModelGraph::new(&[128, 9, 1], specs, Some(5), rng).expect("static architecture")
}

/// Sequence-to-sequence LSTM autoencoder over [128, 9] windows: a 64-unit
/// relu-cell encoder producing the [128, 64] latent sequence, a matching
/// decoder LSTM, and a linear per-step projection back to 9 channels.
pub fn build_lstm_ae<S: Scalar>(rng: &mut SeedRng) -> ModelGraph<S> {
    let specs = vec![
        LayerSpec::Lstm {
            units: 64,
            return_sequences: true,
            activation: Activation::Relu,
        },
        LayerSpec::Lstm {
            units: 64,
            return_sequences: true,
            activation: Activation::Relu,
        },
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Dense {
            units: 9,
            activation: Activation::Linear,
        })),
    ];
    ModelGraph::new(&[128, 9], specs, Some(1), rng).expect("static architecture")
}

/// Convolutional-LSTM autoencoder over windows split into 4 subsequences of
/// 32 steps. The encoder mirrors the classifier front end and bottlenecks
/// through a 100-unit LSTM; the decoder re-expands by repetition, reshapes to
/// per-subsequence feature maps, and finishes with a linear conv/dense pair.
pub fn build_convlstm_ae<S: Scalar>(rng: &mut SeedRng) -> ModelGraph<S> {
    let relu = Activation::Relu;
    let td_conv = |filters, activation| {
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Conv1d {
            filters,
            kernel: 3,
            padding: Padding::Same,
            activation,
        }))
    };
    let specs = vec![
        td_conv(64, relu),
        td_conv(64, relu),
        LayerSpec::TimeDistributed(Box::new(LayerSpec::MaxPool1d { pool: 2 })),
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Flatten)),
        LayerSpec::Lstm {
            units: 100,
            return_sequences: false,
            activation: relu,
        },
        // Decoder.
        LayerSpec::Repeat { count: 4 },
        LayerSpec::Lstm {
            units: 100,
            return_sequences: true,
            activation: relu,
        },
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Repeat { count: 8 })),
        LayerSpec::Reshape {
            shape: vec![4, 32, 25],
        },
        td_conv(64, relu),
        td_conv(64, relu),
        td_conv(1, Activation::Linear),
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Dense {
            units: 9,
            activation: Activation::Linear,
        })),
    ];
    ModelGraph::new(&[4, 32, 9], specs, Some(5), rng).expect("static architecture")
}

/// Convolutional-LSTM activity classifier over [4, 32, 9] inputs: two
/// time-distributed convs, dropout 0.5, pooled/flattened subsequences into a
/// 100-unit LSTM, dropout 0.6, then dense 100 and a softmax over 6 classes.
pub fn build_classifier<S: Scalar>(rng: &mut SeedRng) -> ModelGraph<S> {
    let relu = Activation::Relu;
    let td_conv = |filters| {
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Conv1d {
            filters,
            kernel: 3,
            padding: Padding::Same,
            activation: relu,
        }))
    };
    let specs = vec![
        td_conv(64),
        td_conv(64),
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::TimeDistributed(Box::new(LayerSpec::MaxPool1d { pool: 2 })),
        LayerSpec::TimeDistributed(Box::new(LayerSpec::Flatten)),
        LayerSpec::Lstm {
            units: 100,
            return_sequences: false,
            activation: Activation::Tanh,
        },
        LayerSpec::Dropout { rate: 0.6 },
        LayerSpec::Dense {
            units: 100,
            activation: relu,
        },
        LayerSpec::Dense {
            units: 6,
            activation: Activation::Softmax,
        },
    ];
    ModelGraph::new(&[4, 32, 9], specs, None, rng).expect("static architecture")
}
