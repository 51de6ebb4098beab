//! Named parameter storage, gradient accumulation, and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::numcore::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    tensor: Tensor,
    trainable: bool,
    /// Populated by gradient accumulation; None until first accumulate.
    grad: Option<Tensor>,
    /// Adam first/second moments, allocated on the first optimizer step.
    moments: Option<(Tensor, Tensor)>,
}

/// All model parameters, keyed by unique name.
///
/// A `BTreeMap` keeps iteration order deterministic, which matters for
/// bit-identical training runs and checkpoint layout.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
    step_count: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        self.insert_entry(name, tensor, true)
    }

    /// Insert a non-trainable entry (serialized with checkpoints, skipped by
    /// the optimizer and gradient checks).
    pub fn insert_frozen(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        self.insert_entry(name, tensor, false)
    }

    fn insert_entry(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(CoreError::state(format!("duplicate parameter {name}")));
        }
        self.entries.insert(
            name.to_string(),
            Entry {
                tensor,
                trainable,
                grad: None,
                moments: None,
            },
        );
        Ok(())
    }

    /// Insert with uniform(-bound, bound) initialization.
    pub fn insert_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        bound: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| CoreError::state(format!("unknown parameter {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.tensor)
            .ok_or_else(|| CoreError::state(format!("unknown parameter {name}")))
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).and_then(|e| e.grad.as_ref())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).map(|e| e.trainable).unwrap_or(false)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_step_count(&mut self, n: u64) {
        self.step_count = n;
    }

    /// Names in deterministic (sorted) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(n, _)| n.as_str())
    }

    /// Total number of trainable scalar parameters.
    pub fn num_trainable_values(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Add `grad` into the persistent gradient buffer for `name`.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| CoreError::state(format!("unknown parameter {name}")))?;
        if grad.shape() != entry.tensor.shape() {
            return Err(CoreError::dim(format!(
                "gradient shape {:?} for parameter {name} of shape {:?}",
                grad.shape(),
                entry.tensor.shape()
            )));
        }
        let buf = entry
            .grad
            .get_or_insert_with(|| Tensor::zeros(entry.tensor.shape().to_vec()));
        for (d, &g) in buf.data_mut().iter_mut().zip(grad.data()) {
            *d += g;
        }
        Ok(())
    }

    /// Drop all accumulated gradients (back to the unpopulated state).
    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad = None;
        }
    }

    /// Global L2 norm over all populated gradients.
    pub fn grad_global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for e in self.entries.values() {
            if let Some(g) = &e.grad {
                sq += g.data().iter().map(|&v| v * v).sum::<f64>();
            }
        }
        sq.sqrt()
    }

    /// Scale all gradients so that the global norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_global_norm();
        if norm > max_norm {
            let scale = max_norm / norm;
            for e in self.entries.values_mut() {
                if let Some(g) = &mut e.grad {
                    g.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        norm
    }

    /// One Adam step with bias correction over every trainable entry.
    ///
    /// Every trainable entry must have a populated gradient; gradients are
    /// consumed (cleared) by the step.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for (name, e) in &self.entries {
            if e.trainable && e.grad.is_none() {
                return Err(CoreError::state(format!(
                    "adam_step: missing gradient for {name}"
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for e in self.entries.values_mut() {
            if !e.trainable {
                continue;
            }
            let grad = e.grad.take().unwrap();
            let (m, v) = e.moments.get_or_insert_with(|| {
                (
                    Tensor::zeros(e.tensor.shape().to_vec()),
                    Tensor::zeros(e.tensor.shape().to_vec()),
                )
            });
            for (((theta, &g), m), v) in e
                .tensor
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Adam moment buffers for a parameter, if the optimizer has stepped.
    pub fn adam_moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        self.entries
            .get(name)
            .and_then(|e| e.moments.as_ref())
            .map(|(m, v)| (m, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, data: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, Tensor::vector(data)).unwrap();
        s
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        // With bias correction the first update collapses to -lr * g / (|g| + ~eps).
        let mut s = store_with("w", vec![1.0, -2.0]);
        s.accumulate_grad("w", &Tensor::vector(vec![0.5, -3.0])).unwrap();
        let cfg = AdamConfig::default();
        s.adam_step(&cfg).unwrap();
        let w = s.tensor("w").unwrap().data();
        assert!((w[0] - (1.0 - cfg.lr)).abs() < 1e-6);
        assert!((w[1] - (-2.0 + cfg.lr)).abs() < 1e-6);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_grad_step_leaves_params_unchanged() {
        let mut s = store_with("w", vec![1.0, -2.0]);
        s.accumulate_grad("w", &Tensor::vector(vec![0.0, 0.0])).unwrap();
        s.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(s.tensor("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn missing_gradient_is_state_error() {
        let mut s = store_with("w", vec![1.0]);
        assert!(matches!(
            s.adam_step(&AdamConfig::default()),
            Err(CoreError::State(_))
        ));
    }

    #[test]
    fn constant_gradient_two_steps() {
        // Hand-rolled recurrences: with g = 1 every step, bias correction
        // gives m_hat = v_hat = 1, so theta drops by ~lr each step.
        let mut s = store_with("w", vec![0.0]);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=2i32 {
            s.accumulate_grad("w", &Tensor::vector(vec![1.0])).unwrap();
            s.adam_step(&cfg).unwrap();

            m = cfg.beta1 * m + (1.0 - cfg.beta1);
            v = cfg.beta2 * v + (1.0 - cfg.beta2);
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);

            let w = s.tensor("w").unwrap().data()[0];
            assert!((w - theta).abs() < 1e-15, "step {t}: {w} vs {theta}");
            assert!((w + 0.1 * t as f64).abs() < 1e-6, "decreases by ~0.1/step");
        }
    }

    #[test]
    fn frozen_entries_skip_optimizer() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![1.0])).unwrap();
        s.insert_frozen("table", Tensor::vector(vec![7.0])).unwrap();
        s.accumulate_grad("w", &Tensor::vector(vec![1.0])).unwrap();
        s.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(s.tensor("table").unwrap().data(), &[7.0]);
        assert!(s.adam_moments("table").is_none());
        assert!(s.adam_moments("w").is_some());
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut s = store_with("w", vec![0.0, 0.0]);
        s.accumulate_grad("w", &Tensor::vector(vec![3.0, 4.0])).unwrap();
        let before = s.clip_grad_norm(1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((s.grad_global_norm() - 1.0).abs() < 1e-12);
    }
}
