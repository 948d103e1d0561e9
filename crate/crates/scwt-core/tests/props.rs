//! Property-based invariants over the numeric core and the codec.

use proptest::prelude::*;

use scwt_core::codec;
use scwt_core::dataset::{self, ModelShape};
use scwt_core::optim::{clip_gradient, AdamConfig, AdamState};
use scwt_core::rng::SeedRng;
use scwt_core::tape::{Activation, Tape};
use scwt_core::tensor::Tensor;

fn small_dims(max: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=max, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 2usize..8, seed in 0u64..1000) {
        let mut rng = SeedRng::new(seed, 0);
        let x = Tensor::<f32>::uniform(&[rows, cols], -8.0, 8.0, &mut rng);
        let mut tape = Tape::new();
        let id = tape.leaf(x);
        let y = tape.activation(id, Activation::Softmax).unwrap();
        for row in tape.value(y).data().chunks_exact(cols) {
            let sum: f32 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
        }
    }

    #[test]
    fn sigmoid_outputs_strictly_inside_unit_interval(n in 1usize..40, seed in 0u64..1000) {
        // Beyond |x| ~ 17 an f32 sigmoid rounds to exactly 0 or 1, so the
        // strict bound is asserted where it is representable, and the closed
        // bound everywhere.
        let mut rng = SeedRng::new(seed, 1);
        let x = Tensor::<f32>::uniform(&[n], -15.0, 15.0, &mut rng);
        let mut tape = Tape::new();
        let id = tape.leaf(x);
        let y = tape.activation(id, Activation::Sigmoid).unwrap();
        for &v in tape.value(y).data() {
            prop_assert!(v > 0.0 && v < 1.0, "sigmoid value {v}");
        }
        let extreme = tape.leaf(Tensor::<f32>::new(&[4], vec![-120.0, -40.0, 40.0, 120.0]).unwrap());
        let ye = tape.activation(extreme, Activation::Sigmoid).unwrap();
        for &v in tape.value(ye).data() {
            prop_assert!((0.0..=1.0).contains(&v), "saturated sigmoid value {v}");
        }
    }

    #[test]
    fn max_pool_routes_exactly_the_incoming_gradient_mass(
        n in 1usize..4, t in 1usize..12, c in 1usize..4, pool in 1usize..5, seed in 0u64..1000
    ) {
        let mut rng = SeedRng::new(seed, 2);
        let x = Tensor::<f32>::uniform(&[n, t, c], -1.0, 1.0, &mut rng).with_requires_grad(true);
        let mut tape = Tape::new();
        let id = tape.leaf(x);
        let y = tape.max_pool1d(id, pool).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        let routed: f32 = grads.get(id).unwrap().iter().sum();
        let incoming = tape.value(y).numel() as f32;
        prop_assert_eq!(routed, incoming);
    }

    #[test]
    fn window_reshapes_are_bijective(n in 1usize..5, seed in 0u64..1000) {
        let mut rng = SeedRng::new(seed, 3);
        let windows = Tensor::<f32>::uniform(&[n, 128, 9], -2.0, 2.0, &mut rng);
        for target in [ModelShape::Flat1152, ModelShape::Seq128x9, ModelShape::Img128x9x1, ModelShape::Sub4x32x9] {
            let there = dataset::reshape_for_model(&windows, target).unwrap();
            let back = dataset::reshape_to_windows(&there, target).unwrap();
            prop_assert!(back.bit_eq(&windows));
        }
    }

    #[test]
    fn encf_round_trip_is_bit_identical(dims in small_dims(8), seed in 0u64..1000, as_f64 in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.encf");
        let mut rng = SeedRng::new(seed, 4);
        if as_f64 {
            let t = Tensor::<f64>::uniform(&dims, -100.0, 100.0, &mut rng);
            codec::serialize_features(&t, seed, &path).unwrap();
            let (back, fp) = codec::deserialize_features::<f64>(&path).unwrap();
            prop_assert!(back.bit_eq(&t));
            prop_assert_eq!(fp, seed);
        } else {
            let t = Tensor::<f32>::uniform(&dims, -100.0, 100.0, &mut rng);
            codec::serialize_features(&t, seed, &path).unwrap();
            let (back, fp) = codec::deserialize_features::<f32>(&path).unwrap();
            prop_assert!(back.bit_eq(&t));
            prop_assert_eq!(fp, seed);
        }
    }

    #[test]
    fn clipped_gradients_never_exceed_the_bound(
        values in prop::collection::vec(-10.0f32..10.0, 1..64), clip in 0.01f64..2.0
    ) {
        let mut g = values;
        clip_gradient(&mut g, clip);
        for &v in &g {
            prop_assert!(v.abs() <= clip as f32 + f32::EPSILON);
        }
    }

    #[test]
    fn adam_effective_lr_is_non_increasing(decay in 0.0f64..0.1, steps in 1usize..30) {
        let p = Tensor::<f32>::zeros(&[3]);
        let cfg = AdamConfig { decay, ..AdamConfig::default() };
        let mut state = AdamState::new(cfg, &[&p]);
        let mut prev = f64::INFINITY;
        let mut param = Tensor::<f32>::zeros(&[3]);
        for _ in 0..steps {
            let lr = state.next_effective_lr();
            prop_assert!(lr > 0.0 && lr <= prev);
            prev = lr;
            state.apply(&mut [&mut param], &[Some(&[0.1, -0.1, 0.0])]).unwrap();
        }
    }
}

#[test]
fn training_forward_with_dropout_is_seed_deterministic() {
    let run = || {
        let mut weights_rng = SeedRng::new(5, 1);
        let model = scwt_core::build_classifier::<f32>(&mut weights_rng);
        let mut data_rng = SeedRng::new(6, 0);
        let x = Tensor::<f32>::uniform(&[4, 4, 32, 9], 0.0, 1.0, &mut data_rng);
        let mut tape = Tape::new();
        let id = tape.leaf(x);
        let mut dropout_rng = SeedRng::new(7, 3);
        let (out, _) = model
            .forward_on_tape(&mut tape, id, true, Some(&mut dropout_rng), false)
            .unwrap();
        tape.value(out).clone()
    };
    assert!(run().bit_eq(&run()));
}
