//! Training-behavior contracts for the four autoencoders and the classifier.

use scwt_core::model::ModelGraph;
use scwt_core::optim::{clip_gradient, AdamConfig};
use scwt_core::rng::{streams, SeedRng};
use scwt_core::tape::Tape;
use scwt_core::tensor::Tensor;
use scwt_core::train::{fit, LossKind, TrainConfig, ValidationPolicy};
use scwt_core::weights::{load_weights, save_weights};
use scwt_core::{build_classifier, build_conv_ae, build_convlstm_ae, build_lstm_ae, build_mlp_ae};

fn builders() -> Vec<(&'static str, ModelGraph<f32>, Vec<usize>, Option<f64>)> {
    let mut rng = SeedRng::new(33, streams::WEIGHTS);
    vec![
        ("mlp", build_mlp_ae(&mut rng), vec![6, 1152], None),
        ("conv", build_conv_ae(&mut rng), vec![6, 128, 9, 1], None),
        ("lstm", build_lstm_ae(&mut rng), vec![6, 128, 9], Some(0.5)),
        ("convlstm", build_convlstm_ae(&mut rng), vec![6, 4, 32, 9], None),
    ]
}

#[test]
fn repeated_batch_loss_decreases_for_every_architecture() {
    for (name, mut model, shape, clip) in builders() {
        let mut data_rng = SeedRng::new(44, 0);
        let x = Tensor::<f32>::uniform(&shape, 0.0, 1.0, &mut data_rng);
        let cfg = TrainConfig {
            optimizer: AdamConfig {
                lr: 1e-3,
                clip_value: clip,
                ..AdamConfig::default()
            },
            batch_size: shape[0],
            epochs: 50,
            loss: LossKind::Mse,
            validation: ValidationPolicy::Holdout,
            seed: 9,
        };
        let history = fit(&mut model, &x, &x, None, &cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let first = history.first().unwrap().train_loss;
        let last = history.last().unwrap().train_loss;
        assert!(
            last < first,
            "{name}: loss did not decrease over 50 steps ({first} -> {last})"
        );
        assert!(last.is_finite(), "{name}: non-finite final loss");
    }
}

#[test]
fn decode_encode_equals_forward_for_every_architecture() {
    for (name, model, shape, _) in builders() {
        let mut data_rng = SeedRng::new(45, 0);
        let x = Tensor::<f32>::uniform(&shape, 0.0, 1.0, &mut data_rng);
        let z = model.encode(&x, 3).unwrap();
        let recon = model.decode(&z, 3).unwrap();
        let direct = model.predict(&x, 3).unwrap();
        assert!(recon.bit_eq(&direct), "{name}: decode(encode(x)) != forward(x)");
        let latent_per_window: usize = model.latent_shape().unwrap().iter().product();
        let expected: usize = z.numel() / shape[0];
        assert_eq!(latent_per_window, expected, "{name}: latent size");
    }
}

#[test]
fn weight_round_trip_for_every_architecture() {
    let dir = tempfile::tempdir().unwrap();
    for (name, model, _, _) in builders() {
        let path = dir.path().join(format!("{name}.scwt"));
        save_weights(&model, &path).unwrap();
        // A same-architecture model with different init loads back bit-exact.
        let mut other = match name {
            "mlp" => build_mlp_ae::<f32>(&mut SeedRng::new(500, 1)),
            "conv" => build_conv_ae::<f32>(&mut SeedRng::new(500, 1)),
            "lstm" => build_lstm_ae::<f32>(&mut SeedRng::new(500, 1)),
            _ => build_convlstm_ae::<f32>(&mut SeedRng::new(500, 1)),
        };
        load_weights(&mut other, &path).unwrap();
        for (a, b) in model.params().iter().zip(other.params()) {
            assert!(a.bit_eq(b), "{name}: weight bits changed in transit");
        }
    }
}

#[test]
fn lstm_training_grads_respect_the_clip_bound() {
    // Drive a few real training steps and verify that every post-clip
    // gradient element sits inside [-0.5, 0.5] before the Adam update.
    let mut rng = SeedRng::new(70, streams::WEIGHTS);
    let mut model = build_lstm_ae::<f32>(&mut rng);
    let mut data_rng = SeedRng::new(71, 0);
    let x = Tensor::<f32>::uniform(&[4, 128, 9], 0.0, 1.0, &mut data_rng);
    let mut adam = scwt_core::optim::AdamState::new(
        AdamConfig {
            lr: 1e-4,
            clip_value: Some(0.5),
            ..AdamConfig::default()
        },
        &model.params(),
    );
    for _ in 0..3 {
        let mut tape = Tape::new();
        let id = tape.leaf(x.clone());
        let (out, param_ids) = model.forward_on_tape(&mut tape, id, true, None, true).unwrap();
        let loss = tape.mse(out, id).unwrap();
        let grads = tape.backward(loss).unwrap();
        let mut clipped: Vec<Option<Vec<f32>>> = param_ids
            .iter()
            .map(|&pid| grads.get(pid).map(|g| g.to_vec()))
            .collect();
        for g in clipped.iter_mut().flatten() {
            clip_gradient(g, 0.5);
            assert!(g.iter().all(|v| v.abs() <= 0.5), "post-clip gradient out of bounds");
        }
        let refs: Vec<Option<&[f32]>> = clipped.iter().map(|g| g.as_deref()).collect();
        let mut params = model.params_mut();
        adam.apply(&mut params, &refs).unwrap();
    }
}

#[test]
fn classifier_softmax_holds_after_training() {
    let mut rng = SeedRng::new(72, streams::WEIGHTS);
    let mut model = build_classifier::<f32>(&mut rng);
    let mut data_rng = SeedRng::new(73, 0);
    let x = Tensor::<f32>::uniform(&[12, 4, 32, 9], 0.0, 1.0, &mut data_rng);
    let labels: Vec<u8> = (0..12).map(|i| (i % 6) as u8 + 1).collect();
    let y = scwt_core::dataset::one_hot::<f32>(&labels).unwrap();
    let cfg = TrainConfig {
        optimizer: AdamConfig::with_lr(1e-4),
        batch_size: 4,
        epochs: 5,
        loss: LossKind::CategoricalCrossEntropy,
        validation: ValidationPolicy::Holdout,
        seed: 11,
    };
    fit(&mut model, &x, &y, None, &cfg).unwrap();
    let probs = model.predict(&x, 4).unwrap();
    for row in probs.data().chunks_exact(6) {
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
    }
}

#[test]
fn untrained_classifier_sits_at_chance_on_shuffled_labels() {
    let mut rng = SeedRng::new(74, streams::WEIGHTS);
    let model = build_classifier::<f32>(&mut rng);
    let mut data_rng = SeedRng::new(75, 0);
    let n = 600;
    let x = Tensor::<f32>::uniform(&[n, 4, 32, 9], 0.0, 1.0, &mut data_rng);
    let labels: Vec<u8> = (0..n).map(|_| data_rng.below(6) as u8 + 1).collect();
    let acc = scwt_core::train::evaluate_accuracy(&model, &x, &labels, 64).unwrap();
    assert!(
        (acc - 1.0 / 6.0).abs() < 0.05,
        "untrained accuracy {acc} not within 0.05 of chance"
    );
}
