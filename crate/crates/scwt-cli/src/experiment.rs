//! The end-to-end pipeline: train an autoencoder, persist encoder outputs,
//! reconstruct from the stored codes, classify the reconstructions with the
//! baseline classifier, and account for storage byte-exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scwt_core::codec::{self, StorageReport};
use scwt_core::dataset::{self, ModelShape, Split, WindowBatch};
use scwt_core::model::ModelGraph;
use scwt_core::optim::AdamConfig;
use scwt_core::rng::{streams, SeedRng};
use scwt_core::train::{
    self, EpochStats, LossKind, TrainConfig, TrainError, ValidationPolicy,
};
use scwt_core::weights;
use scwt_core::{build_classifier, build_conv_ae, build_convlstm_ae, build_lstm_ae, build_mlp_ae};

use crate::audit::AuditLog;

const ENCODE_BATCH: usize = 128;
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    MlpAe = 1,
    ConvAe = 2,
    LstmAe = 3,
    ConvLstmAe = 4,
}

impl ExperimentId {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::MlpAe),
            2 => Some(Self::ConvAe),
            3 => Some(Self::LstmAe),
            4 => Some(Self::ConvLstmAe),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MlpAe => "Exp. 1: MLP autoencoder",
            Self::ConvAe => "Exp. 2: Convolutional autoencoder",
            Self::LstmAe => "Exp. 3: LSTM autoencoder",
            Self::ConvLstmAe => "Exp. 4: Convolutional LSTM autoencoder",
        }
    }

    /// Input layout this experiment's model consumes.
    pub fn model_shape(self) -> ModelShape {
        match self {
            Self::MlpAe => ModelShape::Flat1152,
            Self::ConvAe => ModelShape::Img128x9x1,
            Self::LstmAe => ModelShape::Seq128x9,
            Self::ConvLstmAe => ModelShape::Sub4x32x9,
        }
    }

    pub fn build(self, rng: &mut SeedRng) -> ModelGraph<f32> {
        match self {
            Self::MlpAe => build_mlp_ae(rng),
            Self::ConvAe => build_conv_ae(rng),
            Self::LstmAe => build_lstm_ae(rng),
            Self::ConvLstmAe => build_convlstm_ae(rng),
        }
    }

    /// Published training configuration for this experiment.
    pub fn default_train(self, seed: u64) -> TrainConfig {
        let (optimizer, batch_size, epochs, validation) = match self {
            Self::MlpAe => (
                AdamConfig::with_lr(0.001),
                128,
                20,
                ValidationPolicy::Holdout,
            ),
            Self::ConvAe => (
                AdamConfig::with_lr(0.001),
                16,
                150,
                ValidationPolicy::Holdout,
            ),
            Self::LstmAe => (
                AdamConfig {
                    lr: 0.0001,
                    clip_value: Some(0.5),
                    ..AdamConfig::default()
                },
                16,
                300,
                ValidationPolicy::Holdout,
            ),
            Self::ConvLstmAe => (
                AdamConfig {
                    lr: 0.001,
                    decay: 0.000001,
                    ..AdamConfig::default()
                },
                16,
                100,
                ValidationPolicy::SplitTrain { train_fraction: 0.8 },
            ),
        };
        TrainConfig {
            optimizer,
            batch_size,
            epochs,
            loss: LossKind::Mse,
            validation,
            seed,
        }
    }
}

/// One experiment invocation. `None` fields fall back to the published
/// configuration; `subsample` shrinks both splits for quick runs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub exp: ExperimentId,
    pub dataset_root: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub subsample: Option<usize>,
    pub classifier_weights: Option<PathBuf>,
    /// `Some(v)` overrides the gradient clip; `Some(None)` disables it.
    pub clip_override: Option<Option<f64>>,
}

impl ExperimentConfig {
    pub fn new(exp: ExperimentId, dataset_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            exp,
            dataset_root: dataset_root.into(),
            out_dir: out_dir.into(),
            seed: 7,
            epochs: None,
            batch_size: None,
            subsample: None,
            classifier_weights: None,
            clip_override: None,
        }
    }

    fn train_config(&self) -> TrainConfig {
        let mut cfg = self.exp.default_train(self.seed);
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(clip) = self.clip_override {
            cfg.optimizer.clip_value = clip;
        }
        cfg
    }
}

/// One report row; mirrors the reference table's columns plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub exp_id: u8,
    pub seed: u64,
    /// Final-epoch validation MSE.
    pub reconstruction_loss: f64,
    /// Classifier accuracy on the reconstructed test split, percent.
    pub classifier_accuracy_percent: f64,
    pub original_mb: f64,
    pub encoded_mb: f64,
    pub storage_reduction_percent: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Error)]
#[error("experiment {exp_id} failed at stage {stage}: {source}")]
pub struct PipelineError {
    pub exp_id: u8,
    pub stage: &'static str,
    #[source]
    pub source: anyhow::Error,
}

impl PipelineError {
    /// True when the underlying cause is a non-finite training loss.
    pub fn is_non_finite_loss(&self) -> bool {
        self.source
            .chain()
            .any(|e| matches!(e.downcast_ref::<TrainError>(), Some(TrainError::NonFiniteLoss { .. })))
    }
}

fn stage<E: Into<anyhow::Error>>(exp_id: u8, stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        exp_id,
        stage,
        source: e.into(),
    }
}

/// Load, normalize, and optionally subsample both splits.
fn prepare_data(
    root: &Path,
    subsample: Option<usize>,
    seed: u64,
    exp_id: u8,
    audit: &mut AuditLog,
) -> Result<(WindowBatch<f32>, WindowBatch<f32>), PipelineError> {
    let mut train = dataset::load_window_batch::<f32>(root, Split::Train)
        .map_err(stage(exp_id, "load-data"))?;
    let mut test = dataset::load_window_batch::<f32>(root, Split::Test)
        .map_err(stage(exp_id, "load-data"))?;
    audit.record(
        "load-data",
        &["train/Inertial Signals", "train/y_train.txt", "test/Inertial Signals", "test/y_test.txt"],
        &["train.data", "train.labels", "test.data", "test.labels"],
    );
    if let Some(n) = subsample {
        let mut rng = SeedRng::new(seed, streams::SUBSAMPLE);
        train = train.subsample(n, &mut rng).map_err(stage(exp_id, "subsample"))?;
        test = test.subsample(n, &mut rng).map_err(stage(exp_id, "subsample"))?;
        audit.record(
            "subsample",
            &["train.data", "test.data"],
            &["train.data", "test.data"],
        );
    }
    let params = dataset::normalize_fit(&train).map_err(stage(exp_id, "normalize"))?;
    let train = dataset::normalize_apply(&train, &params);
    let test = dataset::normalize_apply(&test, &params);
    audit.record(
        "normalize",
        &["train.data"],
        &["norm.params", "train.data", "test.data"],
    );
    Ok((train, test))
}

/// Run the full procedure for one experiment and write all artifacts under
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, PipelineError> {
    let started = Instant::now();
    let exp_id = cfg.exp.id();
    let mut audit = AuditLog::new();
    std::fs::create_dir_all(&cfg.out_dir).map_err(stage(exp_id, "prepare-output"))?;

    let (train, test) = prepare_data(&cfg.dataset_root, cfg.subsample, cfg.seed, exp_id, &mut audit)?;

    // Shape data for this experiment's model.
    let shape = cfg.exp.model_shape();
    let train_x = dataset::reshape_for_model(&train.data, shape).map_err(stage(exp_id, "reshape-input"))?;
    let test_x = dataset::reshape_for_model(&test.data, shape).map_err(stage(exp_id, "reshape-input"))?;

    // Train the autoencoder.
    let mut rng = SeedRng::new(cfg.seed, streams::WEIGHTS);
    let mut model = cfg.exp.build(&mut rng);
    let train_cfg = cfg.train_config();
    let holdout = match train_cfg.validation {
        ValidationPolicy::Holdout => Some((&test_x, &test_x)),
        ValidationPolicy::SplitTrain { .. } => None,
    };
    let history = train::fit(&mut model, &train_x, &train_x, holdout, &train_cfg)
        .map_err(stage(exp_id, "train-autoencoder"))?;
    let reconstruction_loss = history
        .last()
        .and_then(|e| e.val_loss)
        .unwrap_or_else(|| history.last().map_or(f64::NAN, |e| e.train_loss));
    audit.record("train-autoencoder", &["train.data"], &["autoencoder.weights"]);

    let weights_path = cfg.out_dir.join(format!("exp{exp_id}_autoencoder.scwt"));
    weights::save_weights(&model, &weights_path).map_err(stage(exp_id, "save-weights"))?;

    // Persist the original normalized training tensor and both latents.
    let fingerprint = model.fingerprint();
    let original_path = cfg.out_dir.join(format!("exp{exp_id}_original_train.encf"));
    let original_bytes = codec::serialize_features(&train.data, 0, &original_path)
        .map_err(stage(exp_id, "serialize-original"))?;

    let train_latent = model.encode(&train_x, ENCODE_BATCH).map_err(stage(exp_id, "encode"))?;
    let test_latent = model.encode(&test_x, ENCODE_BATCH).map_err(stage(exp_id, "encode"))?;
    audit.record("encode", &["train.data", "test.data", "autoencoder.weights"], &["train.latent", "test.latent"]);

    let train_latent_path = cfg.out_dir.join(format!("exp{exp_id}_train_latent.encf"));
    let encoded_bytes = codec::serialize_features(&train_latent, fingerprint, &train_latent_path)
        .map_err(stage(exp_id, "serialize-features"))?;
    let test_latent_path = cfg.out_dir.join(format!("exp{exp_id}_test_latent.encf"));
    codec::serialize_features(&test_latent, fingerprint, &test_latent_path)
        .map_err(stage(exp_id, "serialize-features"))?;
    audit.record(
        "serialize-features",
        &["train.latent", "test.latent"],
        &["exp.train_latent.encf", "exp.test_latent.encf", "exp.original_train.encf"],
    );

    // Storage accounting from the files actually on disk.
    let original_mb = codec::measure_size_mb(&original_path).map_err(stage(exp_id, "measure"))?;
    let encoded_mb = codec::measure_size_mb(&train_latent_path).map_err(stage(exp_id, "measure"))?;
    let report = StorageReport::new(original_bytes, encoded_bytes);
    debug_assert_eq!(report.original_mb, original_mb);
    debug_assert_eq!(report.encoded_mb, encoded_mb);

    // Reconstruct the test split from the stored codes.
    let (loaded_latent, loaded_fp) =
        codec::deserialize_features::<f32>(&test_latent_path).map_err(stage(exp_id, "deserialize-features"))?;
    if loaded_fp != fingerprint {
        return Err(stage(exp_id, "deserialize-features")(anyhow::anyhow!(
            "stored fingerprint {loaded_fp:#x} does not match the decoder {fingerprint:#x}"
        )));
    }
    let recon = model.decode(&loaded_latent, ENCODE_BATCH).map_err(stage(exp_id, "decode"))?;
    audit.record("decode", &["exp.test_latent.encf", "autoencoder.weights"], &["test.reconstruction"]);

    // Classifier input: reconstructions reshaped to [N, 4, 32, 9].
    let recon_windows =
        dataset::reshape_to_windows(&recon, shape).map_err(stage(exp_id, "reshape-reconstruction"))?;
    let recon_sub = dataset::reshape_for_model(&recon_windows, ModelShape::Sub4x32x9)
        .map_err(stage(exp_id, "reshape-reconstruction"))?;

    let classifier = match &cfg.classifier_weights {
        Some(path) => {
            let mut classifier = build_classifier::<f32>(&mut SeedRng::new(0, streams::WEIGHTS));
            weights::load_weights(&mut classifier, path).map_err(stage(exp_id, "classifier"))?;
            audit.record("classifier", &["classifier.weights"], &[]);
            classifier
        }
        None => {
            let opts = ClassifierTrainOptions {
                seed: cfg.seed,
                ..ClassifierTrainOptions::default()
            };
            let (classifier, _) = train_classifier_on(&train, &opts).map_err(stage(exp_id, "classifier"))?;
            let path = cfg.out_dir.join("classifier.scwt");
            weights::save_weights(&classifier, &path).map_err(stage(exp_id, "classifier"))?;
            audit.record("classifier", &["train.data", "train.labels"], &["classifier.weights"]);
            classifier
        }
    };

    let accuracy = train::evaluate_accuracy(&classifier, &recon_sub, &test.labels, EVAL_BATCH)
        .map_err(stage(exp_id, "evaluate-accuracy"))?;
    audit.record(
        "evaluate-accuracy",
        &["test.reconstruction", "test.labels", "classifier.weights"],
        &["result.accuracy"],
    );

    let result = ExperimentResult {
        experiment: cfg.exp.name().to_string(),
        exp_id,
        seed: cfg.seed,
        reconstruction_loss,
        classifier_accuracy_percent: accuracy * 100.0,
        original_mb: report.original_mb,
        encoded_mb: report.encoded_mb,
        storage_reduction_percent: report.reduction_percent,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&result).map_err(stage(exp_id, "write-result"))?;
    std::fs::write(cfg.out_dir.join(format!("exp{exp_id}_result.json")), json)
        .map_err(stage(exp_id, "write-result"))?;
    audit
        .write(&cfg.out_dir.join(format!("exp{exp_id}_audit.log")))
        .map_err(stage(exp_id, "write-result"))?;
    Ok(result)
}

/// Classifier training options; defaults follow the published setup
/// (Adam at 1e-5, categorical cross-entropy, batch 16, 150 epochs).
#[derive(Debug, Clone)]
pub struct ClassifierTrainOptions {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub subsample: Option<usize>,
}

impl Default for ClassifierTrainOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            epochs: 150,
            batch_size: 16,
            lr: 0.00001,
            subsample: None,
        }
    }
}

/// Per-epoch classifier metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
}

impl ClassifierHistory {
    pub fn final_train_accuracy(&self) -> f64 {
        *self.train_accuracy.last().unwrap_or(&0.0)
    }
}

/// Train the baseline classifier on an already-normalized window batch.
fn train_classifier_on(
    train: &WindowBatch<f32>,
    opts: &ClassifierTrainOptions,
) -> Result<(ModelGraph<f32>, ClassifierHistory), TrainError> {
    let x = dataset::reshape_for_model(&train.data, ModelShape::Sub4x32x9)?;
    let y = dataset::one_hot::<f32>(&train.labels)
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let mut rng = SeedRng::new(opts.seed, streams::WEIGHTS);
    let mut model = build_classifier::<f32>(&mut rng);
    let cfg = TrainConfig {
        optimizer: AdamConfig::with_lr(opts.lr),
        batch_size: opts.batch_size,
        epochs: opts.epochs,
        loss: LossKind::CategoricalCrossEntropy,
        validation: ValidationPolicy::Holdout,
        seed: opts.seed,
    };
    let mut accuracy = Vec::with_capacity(opts.epochs);
    let labels = train.labels.clone();
    let history = train::fit_with_hook(
        &mut model,
        &x,
        &y,
        None,
        &cfg,
        |_, _, m| {
            let acc = train::evaluate_accuracy(m, &x, &labels, EVAL_BATCH).unwrap_or(0.0);
            accuracy.push(acc);
        },
    )?;
    Ok((
        model,
        ClassifierHistory {
            train_loss: history.iter().map(|e| e.train_loss).collect(),
            train_accuracy: accuracy,
        },
    ))
}

/// Outcome of [`train_baseline_classifier`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub history: ClassifierHistory,
    pub test_accuracy: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Train the baseline classifier on the normalized original training
/// windows, save its weights to `out_path`, and report train/test accuracy.
pub fn train_baseline_classifier(
    dataset_root: &Path,
    out_path: &Path,
    opts: &ClassifierTrainOptions,
) -> Result<ClassifierReport, PipelineError> {
    let mut audit = AuditLog::new();
    let (train, test) = prepare_data(dataset_root, opts.subsample, opts.seed, 0, &mut audit)?;
    let (model, history) = train_classifier_on(&train, opts).map_err(stage(0, "train-classifier"))?;
    weights::save_weights(&model, out_path).map_err(stage(0, "save-classifier"))?;

    let test_x = dataset::reshape_for_model(&test.data, ModelShape::Sub4x32x9)
        .map_err(stage(0, "evaluate-classifier"))?;
    let test_accuracy = train::evaluate_accuracy(&model, &test_x, &test.labels, EVAL_BATCH)
        .map_err(stage(0, "evaluate-classifier"))?;
    Ok(ClassifierReport {
        history,
        test_accuracy,
        epochs: opts.epochs,
        seed: opts.seed,
    })
}

/// Epoch-zero sanity value: accuracy of an untrained classifier.
pub fn untrained_classifier_accuracy(
    train: &WindowBatch<f32>,
    seed: u64,
) -> Result<f64, TrainError> {
    let x = dataset::reshape_for_model(&train.data, ModelShape::Sub4x32x9)?;
    let model = build_classifier::<f32>(&mut SeedRng::new(seed, streams::WEIGHTS));
    train::evaluate_accuracy(&model, &x, &train.labels, EVAL_BATCH)
}

/// Load every `exp*_result.json` under `dir`, sorted by experiment id.
pub fn load_results(dir: &Path) -> std::io::Result<Vec<ExperimentResult>> {
    let mut results = Vec::new();
    for exp_id in 1..=4u8 {
        let path = dir.join(format!("exp{exp_id}_result.json"));
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let result: ExperimentResult = serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            results.push(result);
        }
    }
    Ok(results)
}

pub type History = Vec<EpochStats>;
