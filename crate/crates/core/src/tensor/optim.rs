use serde::{Deserialize, Serialize};

use super::{Real, Tensor, TensorError};

/// AdamW hyperparameters and the inverse-square-root warmup schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.01,
            warmup_steps: 30_000,
        }
    }
}

/// Learning rate at 1-based update `t`: linear warmup to `base`, then
/// decay with the inverse square root of `t`.
pub fn lr_at(t: u64, base: f64, warmup: u64) -> f64 {
    assert!(warmup >= 1, "warmup must be at least one step");
    if t == 0 {
        return 0.0;
    }
    let (t, w) = (t as f64, warmup as f64);
    base * (t / w).min((w / t).sqrt())
}

pub fn global_norm<T: Real>(grads: &[Tensor<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&v| {
            let v = v.f64();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.scale_assign(s);
        }
    }
    norm
}

/// First and second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One AdamW update with decoupled weight decay. Returns the learning
    /// rate that was used.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<f64, TensorError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TensorError::Shape {
                op: "adam",
                detail: format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(TensorError::NonFinite("adam gradient"));
        }
        self.step += 1;
        let lr = lr_at(self.step, cfg.lr, cfg.warmup_steps);
        let bc1 = 1.0 - cfg.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
        let decay = T::of(1.0 - lr * cfg.weight_decay);
        let step_size = T::of(lr / bc1);
        let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
        let eps = T::of(cfg.eps);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TensorError::Shape {
                    op: "adam",
                    detail: format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                *pv = *pv * decay - step_size * *mv / (vv.sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_peaks_at_warmup() {
        assert_eq!(lr_at(0, 1.0, 10), 0.0);
        assert!((lr_at(5, 1.0, 10) - 0.5).abs() < 1e-12);
        assert!((lr_at(10, 1.0, 10) - 1.0).abs() < 1e-12);
        assert!((lr_at(40, 1.0, 10) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Tensor::from_vec(vec![2], vec![3.0f64, 4.0]).unwrap()];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![Tensor::from_vec(vec![1], vec![0.5f64]).unwrap()];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig {
            lr: 0.1,
            warmup_steps: 1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut p = vec![Tensor::from_vec(vec![2], vec![1.0f64, -1.0]).unwrap()];
        let g = vec![Tensor::from_vec(vec![2], vec![2.0f64, -3.0]).unwrap()];
        let mut st = AdamState::new(&p);
        st.step(&cfg, &mut p, &g).unwrap();
        // bias-corrected first step is lr * sign(g) up to eps
        assert!((p[0].data()[0] - 0.9).abs() < 1e-5);
        assert!((p[0].data()[1] + 0.9).abs() < 1e-5);
    }
}
