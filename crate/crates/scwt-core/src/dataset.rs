//! UCI HAR raw-signal ingestion.
//!
//! Reads the published directory layout
//! `<root>/{train,test}/Inertial Signals/<channel>_<split>.txt` plus
//! `<root>/{train,test}/y_<split>.txt` (ASCII, whitespace separated, 128
//! readings per window) into `[N, 128, 9]` window batches with 1-based
//! activity labels, and provides train-fitted min-max normalization.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scalar::{lit, Scalar};
use crate::tensor::{Tensor, TensorError};

pub const WINDOW_LEN: usize = 128;
pub const NUM_CHANNELS: usize = 9;
pub const NUM_CLASSES: usize = 6;

/// Canonical channel order; every tensor's last axis follows it.
pub const CHANNELS: [&str; NUM_CHANNELS] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("inconsistent dataset: {0}")]
    Layout(String),
    #[error("label {label} at line {line} outside 1..=6")]
    LabelRange { label: i64, line: usize },
    #[error("channel {channel} is degenerate: min == max == {value}")]
    DegenerateChannel { channel: String, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// The nine per-channel `[N, 128]` matrices of one split.
pub struct RawSignalSet<S: Scalar> {
    pub channels: Vec<Tensor<S>>,
    pub split: Split,
}

/// Model-ready windows `[N, 128, 9]` plus 1-based labels.
#[derive(Clone)]
pub struct WindowBatch<S: Scalar> {
    pub data: Tensor<S>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl<S: Scalar> WindowBatch<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Seeded subset of the batch (windows stay paired with their labels).
    pub fn subsample(&self, count: usize, rng: &mut crate::rng::SeedRng) -> Result<Self, DatasetError> {
        let count = count.min(self.len());
        let idx = rng.sample_indices(self.len(), count);
        Ok(Self {
            data: self.data.gather_rows(&idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        })
    }
}

/// Per-channel min/max fitted on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams<S: Scalar> {
    pub min: Vec<S>,
    pub max: Vec<S>,
}

/// Parse one whitespace-separated signal file with exactly 128 columns.
pub fn parse_signal_file<S: Scalar>(path: &Path) -> Result<Tensor<S>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::with_capacity(1 << 20, file);
    let mut data: Vec<S> = Vec::new();
    let mut rows = 0usize;
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| DatasetError::Parse {
                path: path.to_path_buf(),
                line: line_idx + 1,
                detail: format!("non-numeric token {token:?}"),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Parse {
                    path: path.to_path_buf(),
                    line: line_idx + 1,
                    detail: format!("non-finite value {token:?}"),
                });
            }
            data.push(lit(v));
            count += 1;
        }
        if count != WINDOW_LEN {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line: line_idx + 1,
                detail: format!("expected {WINDOW_LEN} values per row, got {count}"),
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            line: 0,
            detail: "empty file".into(),
        });
    }
    Ok(Tensor::new(&[rows, WINDOW_LEN], data)?)
}

/// Parse a label file: one integer in 1..=6 per line.
pub fn parse_labels(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: i64 = trimmed.parse().map_err(|_| DatasetError::Parse {
            path: path.to_path_buf(),
            line: line_idx + 1,
            detail: format!("non-integer label {trimmed:?}"),
        })?;
        if !(1..=NUM_CLASSES as i64).contains(&value) {
            return Err(DatasetError::LabelRange {
                label: value,
                line: line_idx + 1,
            });
        }
        labels.push(value as u8);
    }
    Ok(labels)
}

fn signal_path(root: &Path, split: Split, channel: &str) -> PathBuf {
    root.join(split.as_str())
        .join("Inertial Signals")
        .join(format!("{channel}_{split}.txt"))
}

/// Load all nine channels of a split, in canonical order, plus labels.
pub fn load_split<S: Scalar>(
    root: &Path,
    split: Split,
) -> Result<(RawSignalSet<S>, Vec<u8>), DatasetError> {
    let mut channels = Vec::with_capacity(NUM_CHANNELS);
    let mut rows: Option<usize> = None;
    for channel in CHANNELS {
        let tensor = parse_signal_file(&signal_path(root, split, channel))?;
        match rows {
            None => rows = Some(tensor.shape()[0]),
            Some(r) if r != tensor.shape()[0] => {
                return Err(DatasetError::Layout(format!(
                    "channel {channel} has {} rows, expected {r}",
                    tensor.shape()[0]
                )))
            }
            _ => {}
        }
        channels.push(tensor);
    }
    let labels = parse_labels(&root.join(split.as_str()).join(format!("y_{split}.txt")))?;
    let rows = rows.unwrap_or(0);
    if labels.len() != rows {
        return Err(DatasetError::Layout(format!(
            "{} labels for {rows} windows",
            labels.len()
        )));
    }
    Ok((RawSignalSet { channels, split }, labels))
}

/// Interleave a [`RawSignalSet`] into `[N, 128, 9]` windows.
pub fn assemble_windows<S: Scalar>(
    raw: &RawSignalSet<S>,
    labels: Vec<u8>,
) -> Result<WindowBatch<S>, DatasetError> {
    let n = raw.channels[0].shape()[0];
    let mut data = vec![S::zero(); n * WINDOW_LEN * NUM_CHANNELS];
    for (c, channel) in raw.channels.iter().enumerate() {
        let src = channel.data();
        for w in 0..n {
            for t in 0..WINDOW_LEN {
                data[(w * WINDOW_LEN + t) * NUM_CHANNELS + c] = src[w * WINDOW_LEN + t];
            }
        }
    }
    Ok(WindowBatch {
        data: Tensor::new(&[n, WINDOW_LEN, NUM_CHANNELS], data)?,
        labels,
        split: raw.split,
    })
}

/// Convenience: `load_split` + `assemble_windows`.
pub fn load_window_batch<S: Scalar>(root: &Path, split: Split) -> Result<WindowBatch<S>, DatasetError> {
    let (raw, labels) = load_split(root, split)?;
    assemble_windows(&raw, labels)
}

/// Fit per-channel min/max on a training batch.
pub fn normalize_fit<S: Scalar>(train: &WindowBatch<S>) -> Result<NormalizationParams<S>, DatasetError> {
    let mut min = vec![S::infinity(); NUM_CHANNELS];
    let mut max = vec![S::neg_infinity(); NUM_CHANNELS];
    for frame in train.data.data().chunks_exact(NUM_CHANNELS) {
        for (c, &v) in frame.iter().enumerate() {
            if v < min[c] {
                min[c] = v;
            }
            if v > max[c] {
                max[c] = v;
            }
        }
    }
    for c in 0..NUM_CHANNELS {
        if !(max[c] > min[c]) {
            return Err(DatasetError::DegenerateChannel {
                channel: CHANNELS[c].to_string(),
                value: max[c].to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(NormalizationParams { min, max })
}

/// Scale into `[0, 1]` with the fitted parameters, clamping out-of-range
/// values (test data may exceed the training extremes).
pub fn normalize_apply<S: Scalar>(
    batch: &WindowBatch<S>,
    params: &NormalizationParams<S>,
) -> WindowBatch<S> {
    let mut data = Vec::with_capacity(batch.data.numel());
    for frame in batch.data.data().chunks_exact(NUM_CHANNELS) {
        for (c, &v) in frame.iter().enumerate() {
            let scaled = (v - params.min[c]) / (params.max[c] - params.min[c]);
            data.push(scaled.max(S::zero()).min(S::one()));
        }
    }
    WindowBatch {
        data: Tensor::new(batch.data.shape(), data).expect("same shape"),
        labels: batch.labels.clone(),
        split: batch.split,
    }
}

/// Target layouts the models consume. All are pure reshapes of `[N, 128, 9]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelShape {
    /// `[N, 1152]`
    Flat1152,
    /// `[N, 128, 9]` (identity)
    Seq128x9,
    /// `[N, 128, 9, 1]`
    Img128x9x1,
    /// `[N, 4, 32, 9]`: window split into 4 subsequences of 32 steps
    Sub4x32x9,
}

impl ModelShape {
    fn dims(self, n: usize) -> Vec<usize> {
        match self {
            ModelShape::Flat1152 => vec![n, 1152],
            ModelShape::Seq128x9 => vec![n, 128, 9],
            ModelShape::Img128x9x1 => vec![n, 128, 9, 1],
            ModelShape::Sub4x32x9 => vec![n, 4, 32, 9],
        }
    }
}

/// Reshape `[N, 128, 9]` windows into a model input layout.
pub fn reshape_for_model<S: Scalar>(
    windows: &Tensor<S>,
    target: ModelShape,
) -> Result<Tensor<S>, TensorError> {
    expect_shape(windows, &[128, 9], "reshape_for_model")?;
    windows.reshape(&target.dims(windows.shape()[0]))
}

/// Inverse of [`reshape_for_model`].
pub fn reshape_to_windows<S: Scalar>(
    data: &Tensor<S>,
    source: ModelShape,
) -> Result<Tensor<S>, TensorError> {
    let n = data.shape()[0];
    let want = source.dims(n);
    if data.shape() != want.as_slice() {
        return Err(crate::tensor::shape_err(
            "reshape_to_windows",
            format!("expected {want:?}, got {:?}", data.shape()),
        ));
    }
    data.reshape(&[n, 128, 9])
}

fn expect_shape<S: Scalar>(
    t: &Tensor<S>,
    per_sample: &[usize],
    op: &'static str,
) -> Result<(), TensorError> {
    if t.rank() != per_sample.len() + 1 || &t.shape()[1..] != per_sample {
        return Err(crate::tensor::shape_err(
            op,
            format!("expected [N, {per_sample:?}], got {:?}", t.shape()),
        ));
    }
    Ok(())
}

/// One-hot encode 1-based labels into `[N, 6]`.
pub fn one_hot<S: Scalar>(labels: &[u8]) -> Result<Tensor<S>, DatasetError> {
    let mut data = vec![S::zero(); labels.len() * NUM_CLASSES];
    for (i, &label) in labels.iter().enumerate() {
        if !(1..=NUM_CLASSES as u8).contains(&label) {
            return Err(DatasetError::LabelRange {
                label: label as i64,
                line: i + 1,
            });
        }
        data[i * NUM_CLASSES + (label as usize - 1)] = S::one();
    }
    Ok(Tensor::new(&[labels.len(), NUM_CLASSES], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::tempdir;

    fn write_file(path: &Path, content: &str) {
        let mut f = File::create(path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    fn row_of(v: f64) -> String {
        let mut s = String::new();
        for _ in 0..WINDOW_LEN {
            s.push_str(&format!(" {v:.6e}"));
        }
        s.push('\n');
        s
    }

    #[test]
    fn parses_fixed_width_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        write_file(&path, &format!("{}{}", row_of(0.0), row_of(0.0)));
        let t = parse_signal_file::<f32>(&path).unwrap();
        assert_eq!(t.shape(), &[2, 128]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_short_rows_bad_tokens_and_empty_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sig.txt");

        let short: Vec<String> = (0..127).map(|_| "0.1".to_string()).collect();
        write_file(&path, &short.join(" "));
        assert!(matches!(
            parse_signal_file::<f32>(&path),
            Err(DatasetError::Parse { .. })
        ));

        let mut bad = row_of(1.0);
        bad = bad.replacen("1.0", "abc", 1);
        write_file(&path, &bad);
        assert!(matches!(
            parse_signal_file::<f32>(&path),
            Err(DatasetError::Parse { .. })
        ));

        write_file(&path, "");
        assert!(matches!(
            parse_signal_file::<f32>(&path),
            Err(DatasetError::Parse { .. })
        ));
    }

    #[test]
    fn labels_parse_and_range_check() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("y.txt");
        write_file(&path, "1\n6\n3\n");
        assert_eq!(parse_labels(&path).unwrap(), vec![1, 6, 3]);
        write_file(&path, "1\n7\n");
        assert!(matches!(
            parse_labels(&path),
            Err(DatasetError::LabelRange { label: 7, line: 2 })
        ));
    }

    fn tiny_batch(values: &[(usize, f32)]) -> WindowBatch<f32> {
        // Two windows of structured data; `values` overrides (channel, value).
        let n = 2;
        let mut data = vec![0.0f32; n * WINDOW_LEN * NUM_CHANNELS];
        for w in 0..n {
            for t in 0..WINDOW_LEN {
                for c in 0..NUM_CHANNELS {
                    data[(w * WINDOW_LEN + t) * NUM_CHANNELS + c] =
                        (c as f32 + 1.0) * (t as f32 / WINDOW_LEN as f32) - 0.5;
                }
            }
        }
        for &(c, v) in values {
            data[c] = v;
        }
        WindowBatch {
            data: Tensor::new(&[n, WINDOW_LEN, NUM_CHANNELS], data).unwrap(),
            labels: vec![1, 2],
            split: Split::Train,
        }
    }

    #[test]
    fn normalize_fit_finds_channel_extremes() {
        let mut batch = tiny_batch(&[]);
        // Force channel 0 to span [-2, 2].
        let mut data = batch.data.data().to_vec();
        data[0] = -2.0;
        data[NUM_CHANNELS] = 2.0;
        batch.data = Tensor::new(batch.data.shape(), data).unwrap();
        let params = normalize_fit(&batch).unwrap();
        assert_eq!(params.min[0], -2.0);
        assert_eq!(params.max[0], 2.0);
    }

    #[test]
    fn normalize_apply_spans_unit_interval_on_train() {
        let batch = tiny_batch(&[]);
        let params = normalize_fit(&batch).unwrap();
        let normalized = normalize_apply(&batch, &params);
        for c in 0..NUM_CHANNELS {
            let column: Vec<f32> = normalized
                .data
                .data()
                .iter()
                .skip(c)
                .step_by(NUM_CHANNELS)
                .copied()
                .collect();
            let min = column.iter().cloned().fold(f32::INFINITY, f32::min);
            let max = column.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert_eq!(min, 0.0, "channel {c}");
            assert_eq!(max, 1.0, "channel {c}");
        }
        assert!(normalized.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn normalize_clamps_out_of_range_test_values() {
        let train = tiny_batch(&[]);
        let params = normalize_fit(&train).unwrap();
        let mut test = tiny_batch(&[]);
        let mut data = test.data.data().to_vec();
        data[0] = -100.0; // far below the train minimum of channel 0
        test.data = Tensor::new(test.data.shape(), data).unwrap();
        let normalized = normalize_apply(&test, &params);
        assert_eq!(normalized.data.data()[0], 0.0);
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let mut batch = tiny_batch(&[]);
        let mut data = batch.data.data().to_vec();
        for frame in data.chunks_exact_mut(NUM_CHANNELS) {
            frame[3] = 0.25;
        }
        batch.data = Tensor::new(batch.data.shape(), data).unwrap();
        assert!(matches!(
            normalize_fit(&batch),
            Err(DatasetError::DegenerateChannel { .. })
        ));
    }

    #[test]
    fn reshape_round_trips_are_identity() {
        let batch = tiny_batch(&[]);
        for target in [
            ModelShape::Flat1152,
            ModelShape::Seq128x9,
            ModelShape::Img128x9x1,
            ModelShape::Sub4x32x9,
        ] {
            let reshaped = reshape_for_model(&batch.data, target).unwrap();
            let back = reshape_to_windows(&reshaped, target).unwrap();
            assert!(back.bit_eq(&batch.data), "{target:?}");
        }
    }

    #[test]
    fn subsequence_reshape_preserves_timestep_order() {
        let batch = tiny_batch(&[]);
        let sub = reshape_for_model(&batch.data, ModelShape::Sub4x32x9).unwrap();
        for &t in &[0usize, 31, 32, 100, 127] {
            for &c in &[0usize, 5, 8] {
                assert_eq!(
                    batch.data.at(&[1, t, c]),
                    sub.at(&[1, t / 32, t % 32, c]),
                    "t={t} c={c}"
                );
            }
        }
    }

    #[test]
    fn one_hot_rows() {
        let t = one_hot::<f32>(&[1, 6, 3]).unwrap();
        assert_eq!(t.shape(), &[3, 6]);
        assert_eq!(t.at(&[0, 0]), 1.0);
        assert_eq!(t.at(&[1, 5]), 1.0);
        assert_eq!(t.at(&[2, 2]), 1.0);
        for row in t.data().chunks_exact(6) {
            assert_eq!(row.iter().sum::<f32>(), 1.0);
        }
        assert!(one_hot::<f32>(&[0]).is_err());
    }
}
