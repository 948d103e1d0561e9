use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use scwt_cli::experiment::{
    load_results, run_experiment, train_baseline_classifier, untrained_classifier_accuracy,
    ClassifierTrainOptions, ExperimentConfig, ExperimentId,
};
use scwt_cli::report::{emit_report, ReportFormat};
use scwt_core::dataset::{self, Split};

/// Dataset root fallback when `--root` is not given.
const ROOT_ENV: &str = "SCWT_HAR_ROOT";

#[derive(Parser)]
#[command(
    name = "scwt",
    about = "Learned compression workbench for windowed sensor data",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a dataset directory and print a summary.
    Ingest {
        /// Dataset root (falls back to $SCWT_HAR_ROOT).
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Train the baseline activity classifier and save its weights.
    TrainClassifier {
        #[arg(long)]
        root: Option<PathBuf>,
        /// Output weight file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Train on a random subset of this many windows.
        #[arg(long)]
        subsample: Option<usize>,
    },
    /// Run one compression experiment end to end.
    Run {
        /// Experiment id: 1 (MLP), 2 (conv), 3 (LSTM), 4 (conv-LSTM).
        #[arg(long)]
        exp: u8,
        #[arg(long)]
        root: Option<PathBuf>,
        /// Output directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Use a random subset of this many windows (per split).
        #[arg(long)]
        subsample: Option<usize>,
        /// Pre-trained classifier weights; trained on demand if absent.
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Override the gradient clip value.
        #[arg(long, conflicts_with = "no_clip")]
        clip: Option<f64>,
        /// Disable gradient clipping.
        #[arg(long)]
        no_clip: bool,
    },
    /// Aggregate experiment results into a report file.
    Report {
        /// Directory holding exp*_result.json files.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// md or csv.
        #[arg(long)]
        format: String,
    },
}

fn resolve_root(root: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    if let Some(r) = root {
        return Ok(r);
    }
    if let Ok(env) = std::env::var(ROOT_ENV) {
        return Ok(PathBuf::from(env));
    }
    bail!("no dataset root: pass --root or set {ROOT_ENV}")
}

fn cmd_ingest(root: Option<PathBuf>) -> anyhow::Result<()> {
    let root = resolve_root(root)?;
    let train = dataset::load_window_batch::<f32>(&root, Split::Train)?;
    let test = dataset::load_window_batch::<f32>(&root, Split::Test)?;
    let params = dataset::normalize_fit(&train)?;
    println!("dataset root: {}", root.display());
    println!(
        "windows: train {} + test {} = {}",
        train.len(),
        test.len(),
        train.len() + test.len()
    );
    let mut counts = [0usize; dataset::NUM_CLASSES];
    for &l in train.labels.iter().chain(&test.labels) {
        counts[l as usize - 1] += 1;
    }
    println!("label histogram (1..6): {counts:?}");
    for (c, name) in dataset::CHANNELS.iter().enumerate() {
        println!(
            "channel {name}: train range [{:.4}, {:.4}]",
            params.min[c], params.max[c]
        );
    }
    let chance = untrained_classifier_accuracy(&dataset::normalize_apply(&train, &params), 7)?;
    println!("untrained classifier accuracy (sanity, ~1/6): {:.3}", chance);
    Ok(())
}

fn cmd_train_classifier(
    root: Option<PathBuf>,
    out: PathBuf,
    seed: u64,
    epochs: Option<usize>,
    batch: Option<usize>,
    subsample: Option<usize>,
) -> anyhow::Result<()> {
    let root = resolve_root(root)?;
    let mut opts = ClassifierTrainOptions {
        seed,
        subsample,
        ..ClassifierTrainOptions::default()
    };
    if let Some(e) = epochs {
        opts.epochs = e;
    }
    if let Some(b) = batch {
        opts.batch_size = b;
    }
    let report = train_baseline_classifier(&root, &out, &opts)?;
    println!(
        "classifier: train accuracy {:.2}% after {} epochs, test accuracy {:.2}%",
        report.history.final_train_accuracy() * 100.0,
        report.epochs,
        report.test_accuracy * 100.0
    );
    let history_path = out.with_extension("history.json");
    std::fs::write(&history_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", history_path.display()))?;
    println!("weights: {}", out.display());
    println!("history: {}", history_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    exp: u8,
    root: Option<PathBuf>,
    out: PathBuf,
    seed: u64,
    epochs: Option<usize>,
    batch: Option<usize>,
    subsample: Option<usize>,
    classifier: Option<PathBuf>,
    clip: Option<f64>,
    no_clip: bool,
) -> anyhow::Result<()> {
    let exp = ExperimentId::from_u8(exp).context("experiment id must be 1, 2, 3, or 4")?;
    let root = resolve_root(root)?;
    let mut cfg = ExperimentConfig::new(exp, root, out);
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.subsample = subsample;
    cfg.classifier_weights = classifier;
    if no_clip {
        cfg.clip_override = Some(None);
    } else if let Some(c) = clip {
        cfg.clip_override = Some(Some(c));
    }
    let result = run_experiment(&cfg)?;
    println!(
        "{}: loss {:.4}, accuracy {:.2}%, stored {:.3} MB vs {:.3} MB original, reduction {:.2}%, {:.1}s",
        result.experiment,
        result.reconstruction_loss,
        result.classifier_accuracy_percent,
        result.encoded_mb,
        result.original_mb,
        result.storage_reduction_percent,
        result.wall_clock_seconds
    );
    Ok(())
}

fn cmd_report(results: PathBuf, out: PathBuf, format: String) -> anyhow::Result<()> {
    let format: ReportFormat = format.parse().map_err(|e: String| anyhow::anyhow!(e))?;
    let rows = load_results(&results)?;
    if rows.is_empty() {
        bail!("no exp*_result.json files under {}", results.display());
    }
    emit_report(&rows, format, &out)?;
    println!("report with {} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Ingest { root } => cmd_ingest(root),
        Cmd::TrainClassifier {
            root,
            out,
            seed,
            epochs,
            batch,
            subsample,
        } => cmd_train_classifier(root, out, seed, epochs, batch, subsample),
        Cmd::Run {
            exp,
            root,
            out,
            seed,
            epochs,
            batch,
            subsample,
            classifier,
            clip,
            no_clip,
        } => cmd_run(exp, root, out, seed, epochs, batch, subsample, classifier, clip, no_clip),
        Cmd::Report { results, out, format } => cmd_report(results, out, format),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
