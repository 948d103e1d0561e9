//! Learned compression for windowed IoT sensor data.
//!
//! The crate provides, bottom to top:
//!
//! - a dense tensor type with reverse-mode automatic differentiation
//!   ([`tape`]) and an Adam optimizer with gradient clipping and
//!   learning-rate decay ([`optim`]);
//! - UCI HAR raw-signal ingestion and min-max normalization ([`dataset`]),
//!   plus a synthetic corpus generator in the same layout ([`synth`]);
//! - the four autoencoder architectures and the convolutional-LSTM activity
//!   classifier ([`model`]), a mini-batch training driver ([`train`]), and
//!   weight serialization ([`weights`]);
//! - the `ENCF` container for encoded feature tensors with exact storage
//!   accounting in decimal megabytes ([`codec`]), and the published
//!   reference figures it is compared against ([`reference`]).
//!
//! Everything numeric is generic over the [`Scalar`] type. Training and
//! storage run in `f32` (see the aliases below); `f64` instantiations back
//! the finite-difference gradient oracle and the byte-accounting baseline.

pub mod codec;
pub mod dataset;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod reference;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod weights;

pub use model::{
    build_classifier, build_conv_ae, build_convlstm_ae, build_lstm_ae, build_mlp_ae, LayerSpec,
    ModelGraph,
};
pub use optim::{AdamConfig, AdamState};
pub use rng::SeedRng;
pub use scalar::Scalar;
pub use tape::{Activation, Gradients, LstmConfig, Padding, Tape, ValueId};
pub use tensor::{Tensor, TensorError};
pub use train::{
    evaluate_accuracy, evaluate_loss, fit, fit_with_hook, EpochStats, LossKind, TrainConfig,
    TrainError, ValidationPolicy,
};

/// Training/storage precision used throughout the pipeline.
pub type Tensor32 = Tensor<f32>;
/// Double precision, for oracles and the storage baseline.
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Model32 = ModelGraph<f32>;
