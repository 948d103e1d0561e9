//! Scratch probe for pipeline dynamics at reduced scale. Not part of the
//! test suites; used to sanity-check configurations before long runs.

use std::time::Instant;

use scwt_cli::experiment::{ClassifierTrainOptions, ExperimentConfig, ExperimentId};
use scwt_core::dataset::{self, ModelShape, Split};
use scwt_core::optim::AdamConfig;
use scwt_core::rng::{streams, SeedRng};
use scwt_core::synth::{generate_corpus, SynthConfig};
use scwt_core::train::{fit, fit_with_hook, LossKind, TrainConfig, ValidationPolicy};
use scwt_core::{build_classifier, build_lstm_ae, build_mlp_ae};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let dir = std::env::temp_dir().join("scwt_probe_corpus");
    if !dir.join("train").exists() {
        let t0 = Instant::now();
        generate_corpus(
            &dir,
            &SynthConfig {
                train_windows: 2400,
                test_windows: 900,
                seed: 29,
            },
        )
        .unwrap();
        println!("corpus generated in {:.1}s", t0.elapsed().as_secs_f64());
    }
    let train = dataset::load_window_batch::<f32>(&dir, Split::Train).unwrap();
    let test = dataset::load_window_batch::<f32>(&dir, Split::Test).unwrap();
    let params = dataset::normalize_fit(&train).unwrap();
    let train = dataset::normalize_apply(&train, &params);
    let test = dataset::normalize_apply(&test, &params);
    println!("train {} test {}", train.len(), test.len());

    if which == "mlp" || which == "all" {
        let t0 = Instant::now();
        let x = dataset::reshape_for_model(&train.data, ModelShape::Flat1152).unwrap();
        let vx = dataset::reshape_for_model(&test.data, ModelShape::Flat1152).unwrap();
        let mut model = build_mlp_ae::<f32>(&mut SeedRng::new(7, streams::WEIGHTS));
        let cfg = TrainConfig {
            optimizer: AdamConfig::with_lr(0.001),
            batch_size: 128,
            epochs: 20,
            loss: LossKind::Mse,
            validation: ValidationPolicy::Holdout,
            seed: 7,
        };
        let hist = fit(&mut model, &x, &x, Some((&vx, &vx)), &cfg).unwrap();
        for (i, e) in hist.iter().enumerate() {
            if i % 4 == 0 || i == hist.len() - 1 {
                println!("mlp epoch {i}: train {:.5} val {:.5}", e.train_loss, e.val_loss.unwrap());
            }
        }
        println!("mlp done in {:.1}s", t0.elapsed().as_secs_f64());
    }

    if which == "classifier" || which == "all" {
        let t0 = Instant::now();
        let x = dataset::reshape_for_model(&train.data, ModelShape::Sub4x32x9).unwrap();
        let y = dataset::one_hot::<f32>(&train.labels).unwrap();
        let mut model = build_classifier::<f32>(&mut SeedRng::new(7, streams::WEIGHTS));
        let cfg = TrainConfig {
            optimizer: AdamConfig::with_lr(0.00001),
            batch_size: 16,
            epochs: 40,
            loss: LossKind::CategoricalCrossEntropy,
            validation: ValidationPolicy::Holdout,
            seed: 7,
        };
        let labels = train.labels.clone();
        let xc = x.clone();
        fit_with_hook(&mut model, &x, &y, None, &cfg, |e, stats, m| {
            if e % 5 == 0 || e == cfg.epochs - 1 {
                let acc = scwt_core::train::evaluate_accuracy(m, &xc, &labels, 64).unwrap();
                println!(
                    "classifier epoch {e}: loss {:.4} train-acc {:.3} ({:.0}s)",
                    stats.train_loss,
                    acc,
                    t0.elapsed().as_secs_f64()
                );
            }
        })
        .unwrap();
        let tx = dataset::reshape_for_model(&test.data, ModelShape::Sub4x32x9).unwrap();
        let tacc = scwt_core::train::evaluate_accuracy(&model, &tx, &test.labels, 64).unwrap();
        println!("classifier test acc {:.3}, total {:.0}s", tacc, t0.elapsed().as_secs_f64());
    }

    if which == "lstm" || which == "all" {
        // Exploding-gradient probe: unclipped vs clipped on a small subsample.
        let mut sub_rng = SeedRng::new(3, streams::SUBSAMPLE);
        let small = train.subsample(256, &mut sub_rng).unwrap();
        let x = dataset::reshape_for_model(&small.data, ModelShape::Seq128x9).unwrap();
        for seed in [1u64, 2, 3] {
            let t0 = Instant::now();
            let mut model = build_lstm_ae::<f32>(&mut SeedRng::new(seed, streams::WEIGHTS));
            let cfg = TrainConfig {
                optimizer: AdamConfig {
                    lr: 0.0001,
                    clip_value: None,
                    ..AdamConfig::default()
                },
                batch_size: 16,
                epochs: 300,
                loss: LossKind::Mse,
                validation: ValidationPolicy::Holdout,
                seed,
            };
            match fit(&mut model, &x, &x, None, &cfg) {
                Ok(h) => println!(
                    "noclip seed {seed}: survived 300 epochs, final {:.4} ({:.0}s)",
                    h.last().unwrap().train_loss,
                    t0.elapsed().as_secs_f64()
                ),
                Err(e) => println!("noclip seed {seed}: {e} ({:.0}s)", t0.elapsed().as_secs_f64()),
            }
        }
        let t0 = Instant::now();
        let mut model = build_lstm_ae::<f32>(&mut SeedRng::new(1, streams::WEIGHTS));
        let cfg = TrainConfig {
            optimizer: AdamConfig {
                lr: 0.0001,
                clip_value: Some(0.5),
                ..AdamConfig::default()
            },
            batch_size: 16,
            epochs: 300,
            loss: LossKind::Mse,
            validation: ValidationPolicy::Holdout,
            seed: 1,
        };
        match fit(&mut model, &x, &x, None, &cfg) {
            Ok(h) => println!(
                "clip 0.5: finite over 300 epochs, first {:.4} final {:.4} ({:.0}s)",
                h.first().unwrap().train_loss,
                h.last().unwrap().train_loss,
                t0.elapsed().as_secs_f64()
            ),
            Err(e) => println!("clip 0.5: UNEXPECTED {e}"),
        }
    }

    if which == "e2e" {
        // Quick exp1-vs-exp2 reconstruction accuracy gap via the pipeline.
        let out = std::env::temp_dir().join("scwt_probe_out");
        let classifier_path = out.join("classifier.scwt");
        std::fs::create_dir_all(&out).unwrap();
        if !classifier_path.exists() {
            let t0 = Instant::now();
            let report = scwt_cli::experiment::train_baseline_classifier(
                &dir,
                &classifier_path,
                &ClassifierTrainOptions {
                    seed: 7,
                    epochs: 60,
                    subsample: Some(1200),
                    ..ClassifierTrainOptions::default()
                },
            )
            .unwrap();
            println!(
                "classifier: train {:.3} test {:.3} ({:.0}s)",
                report.history.final_train_accuracy(),
                report.test_accuracy,
                t0.elapsed().as_secs_f64()
            );
        }
        for (exp, epochs) in [(ExperimentId::MlpAe, 20), (ExperimentId::ConvAe, 30)] {
            let t0 = Instant::now();
            let mut cfg = ExperimentConfig::new(exp, &dir, &out);
            cfg.subsample = Some(1000);
            cfg.epochs = Some(epochs);
            cfg.classifier_weights = Some(classifier_path.clone());
            let r = scwt_cli::experiment::run_experiment(&cfg).unwrap();
            println!(
                "{}: loss {:.4} acc {:.2}% reduction {:.2}% ({:.0}s)",
                r.experiment,
                r.reconstruction_loss,
                r.classifier_accuracy_percent,
                r.storage_reduction_percent,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
