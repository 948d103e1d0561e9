//! Finite-difference verification of the analytic gradients.
//!
//! Central differences with step `eps` against a rebuilt forward pass. Run
//! these with `f64` tensors: an f32 difference quotient sits at the rounding
//! noise floor and would measure nothing.

use crate::model::ModelGraph;
use crate::scalar::{lit, Scalar};
use crate::tape::{Tape, ValueId};
use crate::tensor::{Tensor, TensorError};
use crate::train::LossKind;

pub const DEFAULT_EPS: f64 = 1e-3;

/// Worst relative disagreement between an analytic gradient and a central
/// difference; both near zero counts as exact.
fn rel_err<S: Scalar>(analytic: S, numeric: S) -> S {
    let denom = analytic.abs().max(numeric.abs());
    if denom < lit(1e-8) {
        S::zero()
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Check gradients of an arbitrary taped computation.
///
/// `build` receives leaf ids for `inputs` (in order) and must return a scalar
/// loss id. Returns the maximum relative error over every element of every
/// input.
pub fn grad_check_fn<S, F>(build: F, inputs: &[Tensor<S>], eps: f64) -> Result<S, TensorError>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[ValueId]) -> Result<ValueId, TensorError>,
{
    let eval = |tensors: &[Tensor<S>]| -> Result<S, TensorError> {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone().with_requires_grad(false)))
            .collect();
        let loss = build(&mut tape, &ids)?;
        Ok(tape.value(loss).data()[0])
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let step: S = lit(eps);
    let mut worst = S::zero();
    let mut work: Vec<Tensor<S>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let analytic = grads.dense(ids[ti], input.numel());
        for e in 0..input.numel() {
            let orig = input.data()[e];
            work[ti].data_mut()[e] = orig + step;
            let plus = eval(&work)?;
            work[ti].data_mut()[e] = orig - step;
            let minus = eval(&work)?;
            work[ti].data_mut()[e] = orig;
            let numeric = (plus - minus) / (step + step);
            let err = rel_err(analytic[e], numeric);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

/// Check every *parameter* gradient of a model against central differences,
/// holding the input batch fixed. Dropout runs in inference mode so the
/// compared function is deterministic.
pub fn grad_check_model<S: Scalar>(
    model: &mut ModelGraph<S>,
    x: &Tensor<S>,
    target: &Tensor<S>,
    loss: LossKind,
    eps: f64,
) -> Result<S, TensorError> {
    let eval = |model: &ModelGraph<S>| -> Result<S, TensorError> {
        let mut tape = Tape::new();
        let x_id = tape.leaf(x.clone());
        let t_id = tape.leaf(target.clone());
        let (out, _) = model.forward_on_tape(&mut tape, x_id, false, None, false)?;
        let l = loss.apply(&mut tape, out, t_id)?;
        Ok(tape.value(l).data()[0])
    };

    // Analytic gradients for all parameters.
    let mut tape = Tape::new();
    let x_id = tape.leaf(x.clone());
    let t_id = tape.leaf(target.clone());
    let (out, param_ids) = model.forward_on_tape(&mut tape, x_id, false, None, true)?;
    let l = loss.apply(&mut tape, out, t_id)?;
    let grads = tape.backward(l)?;
    let analytic: Vec<Vec<S>> = param_ids
        .iter()
        .zip(model.params())
        .map(|(&id, p)| grads.dense(id, p.numel()))
        .collect();
    drop(tape);

    let step: S = lit(eps);
    let mut worst = S::zero();
    let n_params = model.params().len();
    for pi in 0..n_params {
        for e in 0..analytic[pi].len() {
            let orig = model.params()[pi].data()[e];
            model.params_mut()[pi].data_mut()[e] = orig + step;
            let plus = eval(model)?;
            model.params_mut()[pi].data_mut()[e] = orig - step;
            let minus = eval(model)?;
            model.params_mut()[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (step + step);
            let err = rel_err(analytic[pi][e], numeric);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

/// Differentiable operations covered by the randomized gradient sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedOp {
    Dense,
    Conv1d,
    Conv2d,
    MaxPool1d,
    MaxPool2d,
    Upsample2d,
    LstmTanh,
    LstmRelu,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Mse,
    CrossEntropy,
    Dropout,
}

impl CheckedOp {
    pub const ALL: [CheckedOp; 15] = [
        CheckedOp::Dense,
        CheckedOp::Conv1d,
        CheckedOp::Conv2d,
        CheckedOp::MaxPool1d,
        CheckedOp::MaxPool2d,
        CheckedOp::Upsample2d,
        CheckedOp::LstmTanh,
        CheckedOp::LstmRelu,
        CheckedOp::Relu,
        CheckedOp::Sigmoid,
        CheckedOp::Tanh,
        CheckedOp::Softmax,
        CheckedOp::Mse,
        CheckedOp::CrossEntropy,
        CheckedOp::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedOp::Dense => "dense",
            CheckedOp::Conv1d => "conv1d",
            CheckedOp::Conv2d => "conv2d",
            CheckedOp::MaxPool1d => "max_pool1d",
            CheckedOp::MaxPool2d => "max_pool2d",
            CheckedOp::Upsample2d => "upsample2d",
            CheckedOp::LstmTanh => "lstm(tanh)",
            CheckedOp::LstmRelu => "lstm(relu)",
            CheckedOp::Relu => "relu",
            CheckedOp::Sigmoid => "sigmoid",
            CheckedOp::Tanh => "tanh",
            CheckedOp::Softmax => "softmax",
            CheckedOp::Mse => "mse",
            CheckedOp::CrossEntropy => "categorical_cross_entropy",
            CheckedOp::Dropout => "dropout",
        }
    }

    /// Acceptable relative error; the recurrent accumulation of the LSTM
    /// earns it a looser bound.
    pub fn tolerance(self) -> f64 {
        match self {
            CheckedOp::LstmTanh | CheckedOp::LstmRelu => 1e-3,
            _ => 1e-4,
        }
    }
}

/// One randomized f64 gradient check of `op` (axes at most 6 long), returning
/// the maximum relative error. Inputs are drawn to keep the compared function
/// differentiable: values next to a relu kink or a pooling argmax swap inside
/// the `eps` window would invalidate the central difference itself.
pub fn check_op(op: CheckedOp, seed: u64, eps: f64) -> Result<f64, TensorError> {
    use crate::rng::SeedRng;
    use crate::tape::{Activation, LstmConfig, Padding};

    let mut rng = SeedRng::new(seed, 90);
    let mut dim = |lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    // Values with pairwise gaps, for kink-sensitive ops.
    let grid = |shape: &[usize], rng: &mut SeedRng| {
        let numel: usize = shape.iter().product();
        let mut values: Vec<usize> = (0..numel).collect();
        rng.shuffle(&mut values);
        Tensor::<f64>::new(
            shape,
            values.iter().map(|&v| 0.05 * v as f64 - 0.4).collect(),
        )
        .unwrap()
    };
    let uniform = |shape: &[usize], lo: f64, hi: f64, rng: &mut SeedRng| {
        Tensor::<f64>::uniform(shape, lo, hi, rng)
    };

    match op {
        CheckedOp::Dense => {
            let (n, i, o) = (dim(1, 4), dim(1, 6), dim(1, 6));
            let x = uniform(&[n, i], -1.0, 1.0, &mut rng);
            let w = uniform(&[i, o], -1.0, 1.0, &mut rng);
            let b = uniform(&[o], -0.5, 0.5, &mut rng);
            let t = uniform(&[n, o], -1.0, 1.0, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.dense(ids[0], ids[1], ids[2])?;
                    let target = tape.leaf(t.clone());
                    tape.mse(y, target)
                },
                &[x, w, b],
                eps,
            )
        }
        CheckedOp::Conv1d => {
            let (n, c, f, k) = (dim(1, 3), dim(1, 3), dim(1, 3), dim(1, 3));
            let t_len = dim(k.max(2), 6);
            let padding = if seed % 2 == 0 { Padding::Valid } else { Padding::Same };
            let x = uniform(&[n, t_len, c], -1.0, 1.0, &mut rng);
            let kern = uniform(&[k, c, f], -1.0, 1.0, &mut rng);
            let b = uniform(&[f], -0.5, 0.5, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.conv1d(ids[0], ids[1], ids[2], padding)?;
                    let shape = tape.value(y).shape().to_vec();
                    let t = tape.leaf(Tensor::ones(&shape));
                    tape.mse(y, t)
                },
                &[x, kern, b],
                eps,
            )
        }
        CheckedOp::Conv2d => {
            let (n, c, f) = (dim(1, 2), dim(1, 3), dim(1, 3));
            let (kh, kw) = (dim(1, 3), dim(1, 3));
            let (h, w) = (dim(kh.max(2), 5), dim(kw.max(2), 5));
            let padding = if seed % 2 == 0 { Padding::Valid } else { Padding::Same };
            let x = uniform(&[n, h, w, c], -1.0, 1.0, &mut rng);
            let kern = uniform(&[kh, kw, c, f], -1.0, 1.0, &mut rng);
            let b = uniform(&[f], -0.5, 0.5, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.conv2d(ids[0], ids[1], ids[2], padding)?;
                    let shape = tape.value(y).shape().to_vec();
                    let t = tape.leaf(Tensor::ones(&shape));
                    tape.mse(y, t)
                },
                &[x, kern, b],
                eps,
            )
        }
        CheckedOp::MaxPool1d => {
            let (n, t_len, c, p) = (dim(1, 3), dim(2, 6), dim(1, 3), dim(2, 3));
            let x = grid(&[n, t_len, c], &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.max_pool1d(ids[0], p)?;
                    let shape = tape.value(y).shape().to_vec();
                    let t = tape.leaf(Tensor::ones(&shape));
                    tape.mse(y, t)
                },
                &[x],
                eps,
            )
        }
        CheckedOp::MaxPool2d => {
            let (n, h, w, c) = (dim(1, 2), dim(2, 5), dim(2, 5), dim(1, 2));
            let x = grid(&[n, h, w, c], &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.max_pool2d(ids[0], (2, 2))?;
                    let shape = tape.value(y).shape().to_vec();
                    let t = tape.leaf(Tensor::ones(&shape));
                    tape.mse(y, t)
                },
                &[x],
                eps,
            )
        }
        CheckedOp::Upsample2d => {
            let (n, h, w, c) = (dim(1, 2), dim(1, 4), dim(1, 4), dim(1, 3));
            let factor = (dim(1, 3), dim(1, 3));
            let x = uniform(&[n, h, w, c], -1.0, 1.0, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.upsample2d(ids[0], factor)?;
                    let shape = tape.value(y).shape().to_vec();
                    let t = tape.leaf(Tensor::ones(&shape));
                    tape.mse(y, t)
                },
                &[x],
                eps,
            )
        }
        CheckedOp::LstmTanh | CheckedOp::LstmRelu => {
            let (n, t_len, c, u) = (dim(1, 3), dim(2, 4), dim(1, 3), dim(2, 4));
            let relu_cell = matches!(op, CheckedOp::LstmRelu);
            let x = if relu_cell {
                // Positive inputs and a lifted candidate bias keep the cell
                // state clear of the relu kink within the eps window.
                uniform(&[n, t_len, c], 0.2, 0.9, &mut rng)
            } else {
                uniform(&[n, t_len, c], -1.0, 1.0, &mut rng)
            };
            let wx = uniform(&[c, 4 * u], -0.4, 0.4, &mut rng);
            let wh = uniform(&[u, 4 * u], -0.4, 0.4, &mut rng);
            let b = if relu_cell {
                Tensor::<f64>::from_fn(&[4 * u], |i| if (2 * u..3 * u).contains(&(i % (4 * u))) { 0.7 } else { 0.1 })
            } else {
                uniform(&[4 * u], -0.2, 0.2, &mut rng)
            };
            let ret_seq = seed % 2 == 0;
            let cfg = LstmConfig {
                units: u,
                return_sequences: ret_seq,
                cell_activation: if relu_cell { Activation::Relu } else { Activation::Tanh },
            };
            grad_check_fn(
                |tape, ids| {
                    let y = tape.lstm(ids[0], ids[1], ids[2], ids[3], cfg)?;
                    let shape = tape.value(y).shape().to_vec();
                    let t = tape.leaf(Tensor::filled(&shape, 0.5));
                    tape.mse(y, t)
                },
                &[x, wx, wh, b],
                eps,
            )
        }
        CheckedOp::Relu => {
            let n = dim(2, 6);
            // Magnitudes above 2*eps so the kink is outside the window.
            let x = Tensor::<f64>::from_fn(&[n, n], |i| {
                let sign = if (i + seed as usize) % 2 == 0 { 1.0 } else { -1.0 };
                sign * (0.05 + 0.9 * ((i * 37 + 11) % 97) as f64 / 97.0)
            });
            let t = uniform(&[n, n], -1.0, 1.0, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.activation(ids[0], Activation::Relu)?;
                    let target = tape.leaf(t.clone());
                    tape.mse(y, target)
                },
                &[x],
                eps,
            )
        }
        CheckedOp::Sigmoid | CheckedOp::Tanh => {
            let n = dim(2, 6);
            let kind = if matches!(op, CheckedOp::Sigmoid) { Activation::Sigmoid } else { Activation::Tanh };
            let x = uniform(&[n, n], -2.0, 2.0, &mut rng);
            let t = uniform(&[n, n], 0.0, 1.0, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.activation(ids[0], kind)?;
                    let target = tape.leaf(t.clone());
                    tape.mse(y, target)
                },
                &[x],
                eps,
            )
        }
        CheckedOp::Softmax => {
            let (n, k) = (dim(1, 4), dim(2, 6));
            let x = uniform(&[n, k], -2.0, 2.0, &mut rng);
            let t = uniform(&[n, k], 0.0, 1.0, &mut rng);
            grad_check_fn(
                |tape, ids| {
                    let y = tape.activation(ids[0], Activation::Softmax)?;
                    let target = tape.leaf(t.clone());
                    tape.mse(y, target)
                },
                &[x],
                eps,
            )
        }
        CheckedOp::Mse => {
            let n = dim(2, 6);
            let a = uniform(&[n, n], -1.0, 1.0, &mut rng);
            let b = uniform(&[n, n], -1.0, 1.0, &mut rng);
            grad_check_fn(|tape, ids| tape.mse(ids[0], ids[1]), &[a, b], eps)
        }
        CheckedOp::CrossEntropy => {
            // Check through softmax so perturbed rows still sum to one.
            let (n, k) = (dim(1, 4), dim(2, 6));
            let logits = uniform(&[n, k], -1.5, 1.5, &mut rng);
            let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let onehot = Tensor::<f64>::from_fn(&[n, k], |i| {
                if i % k == labels[i / k] {
                    1.0
                } else {
                    0.0
                }
            });
            grad_check_fn(
                |tape, ids| {
                    let probs = tape.activation(ids[0], Activation::Softmax)?;
                    let y = tape.leaf(onehot.clone());
                    tape.categorical_cross_entropy(probs, y)
                },
                &[logits],
                eps,
            )
        }
        CheckedOp::Dropout => {
            // A fresh rng with a fixed seed reproduces the same mask on
            // every finite-difference evaluation.
            let n = dim(3, 6);
            let x = uniform(&[n, n], -1.0, 1.0, &mut rng);
            let t = uniform(&[n, n], -1.0, 1.0, &mut rng);
            let mask_seed = seed.wrapping_add(1000);
            grad_check_fn(
                |tape, ids| {
                    let mut mask_rng = crate::rng::SeedRng::new(mask_seed, 91);
                    let y = tape.dropout(ids[0], 0.4, true, &mut mask_rng)?;
                    let target = tape.leaf(t.clone());
                    tape.mse(y, target)
                },
                &[x],
                eps,
            )
        }
    }
}
