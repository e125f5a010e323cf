//! First-order optimisers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParameterSet;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// `w ← w − lr·g`.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>], lr: T) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape("sgd: parameter/gradient count differs".into()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_shapes(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        AdamState { step: 0, m, v }
    }
}

/// Adam with bias correction.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape("adam: parameter/gradient/state count differs".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape("adam: tensor shape differs from its state".into()));
        }
        for (((w, &gi), mi), vi) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam(AdamConfig),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamConfig::default())
    }
}

impl OptimizerConfig {
    pub fn build<T: Scalar>(&self) -> Optimizer<T> {
        Optimizer {
            config: *self,
            adam: None,
        }
    }
}

/// Optimiser bound lazily to the tensors of one [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    adam: Option<AdamState<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Applies the gradients stored alongside each parameter.
    pub fn step(&mut self, set: &mut ParameterSet<T>) -> Result<()> {
        let (mut values, grads): (Vec<_>, Vec<_>) =
            set.params_mut().map(|p| (&mut p.value, &p.grad)).unzip();
        match self.config {
            OptimizerConfig::Sgd { lr } => sgd_step(&mut values, &grads, T::lit(lr)),
            OptimizerConfig::Adam(cfg) => {
                let state = self
                    .adam
                    .get_or_insert_with(|| AdamState::for_shapes(values.iter().map(|v| v.shape())));
                adam_step(&mut values, &grads, state, &cfg)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_arithmetic() {
        let mut w = Tensor::scalar(1.0f64);
        let g = Tensor::scalar(0.5);
        sgd_step(&mut [&mut w], &[&g], 0.1).unwrap();
        assert!((w.get(0, 0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_regardless_of_scale() {
        for g in [1e-4, 0.3, 250.0] {
            let mut w = Tensor::scalar(0.0f64);
            let grad = Tensor::scalar(g);
            let mut state = AdamState::for_shapes([(1, 1)]);
            let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
            adam_step(&mut [&mut w], &[&grad], &mut state, &cfg).unwrap();
            assert!((w.get(0, 0).abs() - 0.01).abs() < 1e-6, "g={g}: {}", w.get(0, 0));
        }
    }

    #[test]
    fn adam_descends_a_parabola() {
        let mut w = Tensor::scalar(1.0f64);
        let mut state = AdamState::for_shapes([(1, 1)]);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        for _ in 0..100 {
            let grad = Tensor::scalar(2.0 * w.get(0, 0));
            adam_step(&mut [&mut w], &[&grad], &mut state, &cfg).unwrap();
        }
        assert!(w.get(0, 0).abs() < 0.1, "{}", w.get(0, 0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = Tensor::<f64>::zeros(2, 2);
        let g = Tensor::<f64>::zeros(2, 1);
        let mut state = AdamState::for_shapes([(2, 2)]);
        assert!(adam_step(&mut [&mut w], &[&g], &mut state, &AdamConfig::default()).is_err());
        assert!(sgd_step(&mut [&mut w], &[&g], 0.1).is_err());
    }
}
