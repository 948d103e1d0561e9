//! Adam optimizer with elementwise gradient clipping and learning-rate decay.

use crate::scalar::{lit, Scalar};
use crate::tensor::{shape_err, Tensor, TensorError};

/// Optimizer hyperparameters. `clip_value` clamps every gradient element to
/// `[-clip, +clip]` before the moment update; `decay` shrinks the step size
/// as `lr / (1 + decay * step)`.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub clip_value: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.0,
            clip_value: None,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

struct Slot<S> {
    m: Vec<S>,
    v: Vec<S>,
}

/// Per-parameter first/second moment buffers plus the step counter.
pub struct AdamState<S: Scalar> {
    cfg: AdamConfig,
    step: u64,
    slots: Vec<Slot<S>>,
}

impl<S: Scalar> AdamState<S> {
    /// Allocate moment buffers matching `params`.
    pub fn new(cfg: AdamConfig, params: &[&Tensor<S>]) -> Self {
        let slots = params
            .iter()
            .map(|p| Slot {
                m: vec![S::zero(); p.numel()],
                v: vec![S::zero(); p.numel()],
            })
            .collect();
        Self { cfg, step: 0, slots }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Step size that the *next* update will use.
    pub fn next_effective_lr(&self) -> f64 {
        self.cfg.lr / (1.0 + self.cfg.decay * (self.step + 1) as f64)
    }

    /// Apply one update. `grads[i]` must match `params[i]` in element count;
    /// a `None` gradient leaves that parameter untouched.
    pub fn apply(
        &mut self,
        params: &mut [&mut Tensor<S>],
        grads: &[Option<&[S]>],
    ) -> Result<(), TensorError> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(shape_err(
                "adam",
                format!(
                    "expected {} parameters, got {} with {} gradients",
                    self.slots.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        self.step += 1;
        let t = self.step;
        let lr = self.cfg.lr / (1.0 + self.cfg.decay * t as f64);
        let beta1: S = lit(self.cfg.beta1);
        let beta2: S = lit(self.cfg.beta2);
        let one = S::one();
        let eps: S = lit(self.cfg.epsilon);
        let bias1: S = lit(1.0 - self.cfg.beta1.powi(t as i32));
        let bias2: S = lit(1.0 - self.cfg.beta2.powi(t as i32));
        let lr_s: S = lit(lr);
        let clip: Option<S> = self.cfg.clip_value.map(lit);

        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let Some(grad) = grad else { continue };
            if grad.len() != param.numel() || slot.m.len() != param.numel() {
                return Err(shape_err(
                    "adam",
                    format!(
                        "gradient/moment length {} vs parameter {} elements",
                        grad.len(),
                        param.numel()
                    ),
                ));
            }
            let data = param.data_mut();
            for (idx, &g_raw) in grad.iter().enumerate() {
                let g = match clip {
                    Some(c) => {
                        if g_raw > c {
                            c
                        } else if g_raw < -c {
                            -c
                        } else {
                            g_raw
                        }
                    }
                    None => g_raw,
                };
                let m = beta1 * slot.m[idx] + (one - beta1) * g;
                let v = beta2 * slot.v[idx] + (one - beta2) * g * g;
                slot.m[idx] = m;
                slot.v[idx] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                data[idx] = data[idx] - lr_s * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Clamp every element of `grad` to `[-clip, clip]`. Exposed for tests and
/// for callers that inspect post-clip gradients.
pub fn clip_gradient<S: Scalar>(grad: &mut [S], clip: f64) {
    let c: S = lit(clip);
    for g in grad {
        if *g > c {
            *g = c;
        } else if *g < -c {
            *g = -c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f32) -> Tensor<f32> {
        Tensor::new(&[1], vec![value]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = single_param(0.5);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        state.apply(&mut [&mut p], &[Some(&[0.0])]).unwrap();
        assert_eq!(p.data()[0], 0.5);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Hand evaluation at t=1 with g=1: m_hat=1, v_hat=1, so the update is
        // lr / (1 + eps) which is 0.001 to within 1e-8.
        let mut p = single_param(1.0);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        state.apply(&mut [&mut p], &[Some(&[1.0])]).unwrap();
        let moved = 1.0 - p.data()[0];
        assert!((moved - 0.001).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn clipped_gradient_behaves_like_clip_value() {
        let cfg = AdamConfig {
            clip_value: Some(0.5),
            ..AdamConfig::default()
        };
        let mut p_clipped = single_param(1.0);
        let mut s1 = AdamState::new(cfg, &[&p_clipped]);
        s1.apply(&mut [&mut p_clipped], &[Some(&[2.0])]).unwrap();

        let mut p_exact = single_param(1.0);
        let mut s2 = AdamState::new(cfg, &[&p_exact]);
        s2.apply(&mut [&mut p_exact], &[Some(&[0.5])]).unwrap();

        assert_eq!(p_clipped.data()[0].to_bits(), p_exact.data()[0].to_bits());
    }

    #[test]
    fn clip_gradient_bounds_all_elements() {
        let mut g = vec![-2.0f32, -0.4, 0.0, 0.7, 3.0];
        clip_gradient(&mut g, 0.5);
        assert_eq!(g, vec![-0.5, -0.4, 0.0, 0.5, 0.5]);
        assert!(g.iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn effective_lr_non_increasing_with_decay() {
        let cfg = AdamConfig {
            decay: 1e-3,
            ..AdamConfig::default()
        };
        let mut p = single_param(0.0);
        let mut state = AdamState::new(cfg, &[&p]);
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let lr = state.next_effective_lr();
            assert!(lr > 0.0);
            assert!(lr <= last);
            last = lr;
            state.apply(&mut [&mut p], &[Some(&[0.1])]).unwrap();
        }
    }

    #[test]
    fn decayed_lr_formula() {
        let cfg = AdamConfig {
            lr: 0.001,
            decay: 0.5,
            ..AdamConfig::default()
        };
        let p = single_param(0.0);
        let state = AdamState::<f32>::new(cfg, &[&p]);
        // First update uses step 1: lr / (1 + 0.5)
        assert!((state.next_effective_lr() - 0.001 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn mismatched_gradient_length_errors() {
        let mut p = single_param(0.0);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        let g = [0.0f32, 1.0];
        assert!(state.apply(&mut [&mut p], &[Some(&g)]).is_err());
    }
}
