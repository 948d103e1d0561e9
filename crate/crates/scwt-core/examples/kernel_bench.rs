//! Rough single-core throughput probe for the hot kernels.

use std::time::Instant;

use scwt_core::linalg::matmul;
use scwt_core::rng::SeedRng;
use scwt_core::tape::{Activation, LstmConfig, Padding, Tape};
use scwt_core::tensor::Tensor;

fn main() {
    let mut rng = SeedRng::new(1, 0);

    // matmul: 128x1152 . 1152x512 (the MLP's heaviest layer)
    let (m, k, n) = (128, 1152, 512);
    let a: Vec<f32> = (0..m * k).map(|_| rng.f64_in(-1.0, 1.0) as f32).collect();
    let b: Vec<f32> = (0..k * n).map(|_| rng.f64_in(-1.0, 1.0) as f32).collect();
    let mut out = vec![0.0f32; m * n];
    let reps = 40;
    let t0 = Instant::now();
    for _ in 0..reps {
        matmul(&a, &b, m, k, n, &mut out);
    }
    let dt = t0.elapsed().as_secs_f64();
    let gflops = (2.0 * m as f64 * k as f64 * n as f64 * reps as f64) / dt / 1e9;
    println!("matmul {m}x{k}x{n}: {gflops:.2} GFLOP/s ({dt:.3}s total, sink {})", out[0]);

    // conv2d forward+backward on a conv-AE-sized batch
    let x = Tensor::<f32>::uniform(&[16, 32, 9, 32], 0.0, 1.0, &mut rng);
    let kern = Tensor::<f32>::uniform(&[3, 3, 32, 64], -0.1, 0.1, &mut rng).with_requires_grad(true);
    let bias = Tensor::<f32>::zeros(&[64]).with_requires_grad(true);
    let t0 = Instant::now();
    let reps = 10;
    for _ in 0..reps {
        let mut tape = Tape::new();
        let xi = tape.leaf(x.clone().with_requires_grad(true));
        let ki = tape.leaf(kern.clone());
        let bi = tape.leaf(bias.clone());
        let y = tape.conv2d(xi, ki, bi, Padding::Same).unwrap();
        let l = tape.sum(y);
        let _ = tape.backward(l).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    // fwd ~2*16*32*9*288*64 MACs, bwd ~2x
    let flops = 3.0 * 2.0 * 16.0 * 32.0 * 9.0 * 288.0 * 64.0;
    println!("conv2d step: {:.2} GFLOP/s effective ({:.1} ms/step)", flops * reps as f64 / dt / 1e9, dt * 1000.0 / reps as f64);

    // LSTM fwd+bwd, 128 steps, batch 16, 9 -> 64 units
    let x = Tensor::<f32>::uniform(&[16, 128, 9], 0.0, 1.0, &mut rng);
    let wx = Tensor::<f32>::uniform(&[9, 256], -0.2, 0.2, &mut rng).with_requires_grad(true);
    let wh = Tensor::<f32>::uniform(&[64, 256], -0.2, 0.2, &mut rng).with_requires_grad(true);
    let b = Tensor::<f32>::zeros(&[256]).with_requires_grad(true);
    let t0 = Instant::now();
    let reps = 10;
    for _ in 0..reps {
        let mut tape = Tape::new();
        let xi = tape.leaf(x.clone().with_requires_grad(true));
        let wxi = tape.leaf(wx.clone());
        let whi = tape.leaf(wh.clone());
        let bi = tape.leaf(b.clone());
        let y = tape
            .lstm(xi, wxi, whi, bi, LstmConfig { units: 64, return_sequences: true, cell_activation: Activation::Tanh })
            .unwrap();
        let l = tape.sum(y);
        let _ = tape.backward(l).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("lstm(128 steps, batch 16, 64 units) step: {:.1} ms", dt * 1000.0 / reps as f64);
}
