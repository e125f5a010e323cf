//! Common interface of the CTR rankers and model construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctr::autoint::AutoInt;
use crate::ctr::lr::{LrEmb, LrRaw};
use crate::data::ctr::{FeatureSchema, Sample};
use crate::error::{invalid, Result};
use crate::nn::gradcheck::Differentiable;
use crate::nn::layers::sigmoid;
use crate::nn::params::ParameterSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LrRaw,
    LrEmb,
    #[serde(rename = "autoint")]
    AutoInt,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LrRaw => "lr-raw",
            ModelKind::LrEmb => "lr-emb",
            ModelKind::AutoInt => "autoint",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub embedding_dim: usize,
    pub attention_layers: usize,
    pub heads: usize,
    /// Total attention output width, split evenly over the heads.
    pub attention_size: usize,
    pub hidden_units: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::AutoInt,
            embedding_dim: 16,
            attention_layers: 3,
            heads: 2,
            attention_size: 32,
            hidden_units: 32,
            dropout: 0.3,
        }
    }
}

impl ModelConfig {
    pub fn with_kind(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(invalid!("embedding_dim must be positive"));
        }
        if self.kind == ModelKind::AutoInt {
            if self.heads == 0 || self.attention_size == 0 || self.attention_size % self.heads != 0 {
                return Err(invalid!(
                    "attention_size {} must be a positive multiple of heads {}",
                    self.attention_size,
                    self.heads
                ));
            }
            if self.hidden_units == 0 {
                return Err(invalid!("hidden_units must be positive"));
            }
            if !(0.0..1.0).contains(&self.dropout) {
                return Err(invalid!("dropout {} outside [0, 1)", self.dropout));
            }
        }
        Ok(())
    }
}

/// `softplus(z) − y·z`: binary cross-entropy of `sigmoid(z)`, computed
/// without forming the probability.
pub fn logit_bce<T: Scalar>(z: T, label: u8) -> T {
    let y = if label == 1 { T::one() } else { T::zero() };
    z.max(T::zero()) - y * z + (-z.abs()).exp().ln_1p()
}

/// A click-through-rate model over one feature schema.
pub trait CtrModel<T: Scalar>: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn schema(&self) -> &FeatureSchema;
    fn params(&self) -> &ParameterSet<T>;
    fn params_mut(&mut self) -> &mut ParameterSet<T>;

    /// Evaluation-mode logit.
    fn logit(&self, sample: &Sample) -> Result<T>;

    /// Forward and backward pass for one sample. Adds `scale` times the
    /// gradient of its loss to the parameter gradients and returns the loss.
    fn accumulate(&mut self, sample: &Sample, train: bool, rng: &mut ChaCha8Rng, scale: T) -> Result<T>;

    fn clone_box(&self) -> Box<dyn CtrModel<T>>;

    fn predict(&self, sample: &Sample) -> Result<T> {
        Ok(sigmoid(self.logit(sample)?))
    }

    fn predict_batch(&self, samples: &[Sample]) -> Result<Vec<T>> {
        samples.iter().map(|s| self.predict(s)).collect()
    }

    /// Mean loss over `batch`; gradients of the mean are added to the
    /// parameter gradients.
    fn forward_backward(&mut self, batch: &[&Sample], train: bool, rng: &mut ChaCha8Rng) -> Result<T> {
        if batch.is_empty() {
            return Err(invalid!("empty batch"));
        }
        let scale = T::one() / T::from_usize_lossy(batch.len());
        let mut total = T::zero();
        for s in batch {
            total += self.accumulate(s, train, rng, scale)?;
        }
        Ok(total * scale)
    }

    /// Mean evaluation-mode loss.
    fn mean_loss(&self, samples: &[Sample]) -> Result<T> {
        if samples.is_empty() {
            return Err(invalid!("empty batch"));
        }
        let mut total = T::zero();
        for s in samples {
            total += logit_bce(self.logit(s)?, s.label);
        }
        Ok(total / T::from_usize_lossy(samples.len()))
    }
}

impl<T: Scalar> Clone for Box<dyn CtrModel<T>> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Builds a freshly initialised model; the same seed gives the same weights.
pub fn build_model<T: Scalar>(cfg: &ModelConfig, schema: &FeatureSchema, seed: u64) -> Result<Box<dyn CtrModel<T>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match cfg.kind {
        ModelKind::LrRaw => Box::new(LrRaw::new(schema.clone(), &mut rng)),
        ModelKind::LrEmb => Box::new(LrEmb::new(schema.clone(), cfg.embedding_dim, &mut rng)),
        ModelKind::AutoInt => Box::new(AutoInt::new(schema.clone(), cfg, &mut rng)?),
    })
}

/// Adapts a model and a fixed batch to the gradient checker; dropout is off.
pub struct BatchObjective<'a, T: Scalar> {
    pub model: &'a mut dyn CtrModel<T>,
    pub batch: &'a [Sample],
}

impl<T: Scalar> Differentiable<T> for BatchObjective<'_, T> {
    fn parameters(&self) -> &ParameterSet<T> {
        self.model.params()
    }

    fn parameters_mut(&mut self) -> &mut ParameterSet<T> {
        self.model.params_mut()
    }

    fn loss(&mut self) -> Result<T> {
        self.model.mean_loss(self.batch)
    }

    fn loss_and_grad(&mut self) -> Result<T> {
        self.model.params_mut().zero_grad();
        let refs: Vec<&Sample> = self.batch.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.model.forward_backward(&refs, false, &mut rng)
    }
}
