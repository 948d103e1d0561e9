//! Mini-batch training driver: seeded shuffling, Adam updates, per-epoch
//! train/validation loss history, and accuracy evaluation.

use thiserror::Error;

use crate::model::ModelGraph;
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{streams, SeedRng};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CategoricalCrossEntropy,
}

impl LossKind {
    pub fn apply<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        pred: ValueId,
        target: ValueId,
    ) -> Result<ValueId, TensorError> {
        match self {
            LossKind::Mse => tape.mse(pred, target),
            LossKind::CategoricalCrossEntropy => tape.categorical_cross_entropy(pred, target),
        }
    }
}

/// Where validation data comes from.
#[derive(Debug, Clone, Copy)]
pub enum ValidationPolicy {
    /// Caller supplies a fixed holdout set.
    Holdout,
    /// Carve a seeded split off the training data; `train_fraction` stays
    /// for training, the rest validates.
    SplitTrain { train_fraction: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub validation: ValidationPolicy,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("bad training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Train `model` in place. `targets` pair row-for-row with `x` (pass `x`
/// itself for autoencoders). `holdout` supplies validation data under
/// [`ValidationPolicy::Holdout`]. Returns one entry per epoch.
pub fn fit<S: Scalar>(
    model: &mut ModelGraph<S>,
    x: &Tensor<S>,
    targets: &Tensor<S>,
    holdout: Option<(&Tensor<S>, &Tensor<S>)>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, TrainError> {
    fit_with_hook(model, x, targets, holdout, cfg, |_, _, _| {})
}

/// [`fit`] with a per-epoch callback `(epoch, stats, model)`, for callers
/// that track extra metrics such as accuracy.
pub fn fit_with_hook<S: Scalar>(
    model: &mut ModelGraph<S>,
    x: &Tensor<S>,
    targets: &Tensor<S>,
    holdout: Option<(&Tensor<S>, &Tensor<S>)>,
    cfg: &TrainConfig,
    mut epoch_hook: impl FnMut(usize, &EpochStats, &ModelGraph<S>),
) -> Result<Vec<EpochStats>, TrainError> {
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be >= 1".into()));
    }
    if cfg.epochs == 0 {
        return Err(TrainError::Config("epochs must be >= 1".into()));
    }
    if x.shape()[0] != targets.shape()[0] {
        return Err(TrainError::Config(format!(
            "{} inputs vs {} targets",
            x.shape()[0],
            targets.shape()[0]
        )));
    }

    // Resolve training and validation tensors per policy.
    let (train_x, train_t, val) = match cfg.validation {
        ValidationPolicy::Holdout => (
            x.clone(),
            targets.clone(),
            holdout.map(|(a, b)| (a.clone(), b.clone())),
        ),
        ValidationPolicy::SplitTrain { train_fraction } => {
            if holdout.is_some() {
                return Err(TrainError::Config(
                    "holdout data given but policy is a train split".into(),
                ));
            }
            if !(0.0..1.0).contains(&train_fraction) {
                return Err(TrainError::Config(format!(
                    "train_fraction {train_fraction} outside (0, 1)"
                )));
            }
            let n = x.shape()[0];
            let n_train = ((n as f64) * train_fraction).floor() as usize;
            if n_train == 0 || n_train == n {
                return Err(TrainError::Config(format!(
                    "split of {n} rows at {train_fraction} leaves an empty side"
                )));
            }
            let mut split_rng = SeedRng::new(cfg.seed, streams::SPLIT);
            let mut idx: Vec<usize> = (0..n).collect();
            split_rng.shuffle(&mut idx);
            let (train_idx, val_idx) = idx.split_at(n_train);
            (
                x.gather_rows(train_idx)?,
                targets.gather_rows(train_idx)?,
                Some((x.gather_rows(val_idx)?, targets.gather_rows(val_idx)?)),
            )
        }
    };

    let mut shuffle_rng = SeedRng::new(cfg.seed, streams::SHUFFLE);
    let mut dropout_rng = SeedRng::new(cfg.seed, streams::DROPOUT);
    let mut adam = AdamState::new(cfg.optimizer, &model.params());

    let n = train_x.shape()[0];
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut row_sum = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let bx = train_x.gather_rows(chunk)?;
            let bt = train_t.gather_rows(chunk)?;
            let rows = chunk.len();

            let mut tape = Tape::new();
            let x_id = tape.leaf(bx);
            let t_id = tape.leaf(bt);
            let step = (|| -> Result<f64, TensorError> {
                let (out, param_ids) =
                    model.forward_on_tape(&mut tape, x_id, true, Some(&mut dropout_rng), true)?;
                let loss_id = cfg.loss.apply(&mut tape, out, t_id)?;
                let loss = tape.value(loss_id).data()[0]
                    .to_f64()
                    .unwrap_or(f64::NAN);
                if !loss.is_finite() {
                    return Err(TensorError::NonFinite { op: "loss", detail: None });
                }
                let grads = tape.backward(loss_id)?;
                let grad_refs: Vec<Option<&[S]>> =
                    param_ids.iter().map(|&id| grads.get(id)).collect();
                let mut params = model.params_mut();
                adam.apply(&mut params, &grad_refs)?;
                Ok(loss)
            })();
            let loss = match step {
                Ok(loss) => loss,
                Err(TensorError::NonFinite { .. }) => {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            loss_sum += loss * rows as f64;
            row_sum += rows;
        }
        let val_loss = match &val {
            Some((vx, vt)) => Some(evaluate_loss(model, vx, vt, cfg.loss, cfg.batch_size)?),
            None => None,
        };
        let stats = EpochStats {
            train_loss: loss_sum / row_sum as f64,
            val_loss,
        };
        epoch_hook(epoch, &stats, model);
        history.push(stats);
    }
    Ok(history)
}

/// Mean loss over a dataset in inference mode, batched to bound memory.
pub fn evaluate_loss<S: Scalar>(
    model: &ModelGraph<S>,
    x: &Tensor<S>,
    targets: &Tensor<S>,
    loss: LossKind,
    batch_size: usize,
) -> Result<f64, TrainError> {
    let n = x.shape()[0];
    let step = batch_size.max(1);
    let mut loss_sum = 0.0f64;
    let mut lo = 0;
    while lo < n {
        let hi = (lo + step).min(n);
        let mut tape = Tape::new();
        let x_id = tape.leaf(x.slice_rows(lo, hi)?);
        let t_id = tape.leaf(targets.slice_rows(lo, hi)?);
        let (out, _) = model.forward_on_tape(&mut tape, x_id, false, None, false)?;
        let l = loss.apply(&mut tape, out, t_id)?;
        let v = tape.value(l).data()[0].to_f64().unwrap_or(f64::NAN);
        if !v.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch: 0, batch: lo / step });
        }
        loss_sum += v * (hi - lo) as f64;
        lo = hi;
    }
    Ok(loss_sum / n as f64)
}

/// Fraction of rows whose argmax class matches `labels` (1-based). Ties
/// resolve to the lowest class index.
pub fn evaluate_accuracy<S: Scalar>(
    model: &ModelGraph<S>,
    x: &Tensor<S>,
    labels: &[u8],
    batch_size: usize,
) -> Result<f64, TrainError> {
    if x.shape()[0] != labels.len() {
        return Err(TrainError::Config(format!(
            "{} rows vs {} labels",
            x.shape()[0],
            labels.len()
        )));
    }
    let probs = model.predict(x, batch_size.max(1)).map_err(TrainError::Tensor)?;
    let k = *probs.shape().last().unwrap();
    let mut correct = 0usize;
    for (row, &label) in probs.data().chunks_exact(k).zip(labels) {
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best + 1 == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}
