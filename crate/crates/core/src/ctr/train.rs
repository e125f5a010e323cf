//! Mini-batch training loop and schema-checked model checkpoints.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctr::model::{build_model, CtrModel, ModelConfig};
use crate::data::ctr::{FeatureSchema, Sample, SchemaDescriptor};
use crate::error::{invalid, Error, Result};
use crate::nn::optim::Optimizer;
use crate::nn::params::{Checkpoint, ParameterSet};
use crate::scalar::Scalar;

/// Shuffled mini-batch training. Returns the mean training loss of each
/// epoch; `epochs = 0` leaves the model untouched.
pub fn train_epochs<T: Scalar>(
    model: &mut dyn CtrModel<T>,
    samples: &[Sample],
    optimizer: &mut Optimizer<T>,
    batch_size: usize,
    epochs: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if samples.is_empty() {
        return Err(invalid!("cannot train on an empty dataset"));
    }
    if batch_size == 0 {
        return Err(invalid!("batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = T::zero();
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            model.params_mut().zero_grad();
            let loss = model.forward_backward(&batch, true, &mut rng)?;
            optimizer.step(model.params_mut())?;
            total += loss * T::from_usize_lossy(batch.len());
        }
        model.params().check_finite()?;
        trace.push(total / T::from_usize_lossy(samples.len()));
    }
    Ok(trace)
}

/// Model weights together with what is needed to rebuild and validate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub descriptor: SchemaDescriptor,
    pub params: Checkpoint,
}

impl ModelCheckpoint {
    pub fn capture<T: Scalar>(model: &dyn CtrModel<T>, config: &ModelConfig) -> Self {
        ModelCheckpoint {
            config: *config,
            schema: model.schema().clone(),
            descriptor: model.schema().descriptor(),
            params: model.params().to_checkpoint(),
        }
    }

    /// Rebuilds the model; fails if `expected` encodes features differently
    /// from the schema the weights were trained on.
    pub fn restore<T: Scalar>(&self, expected: Option<&FeatureSchema>) -> Result<Box<dyn CtrModel<T>>> {
        if self.schema.descriptor() != self.descriptor {
            return Err(Error::SchemaMismatch("checkpoint schema does not match its descriptor".into()));
        }
        if let Some(s) = expected {
            if s.descriptor() != self.descriptor {
                return Err(Error::SchemaMismatch("checkpoint was trained on a different feature schema".into()));
            }
        }
        let mut model = build_model::<T>(&self.config, &self.schema, 0)?;
        let params = ParameterSet::<T>::from_checkpoint(&self.params)?;
        if !params.same_structure(model.params()) {
            return Err(Error::Shape("checkpoint tensors do not fit the model".into()));
        }
        model.params_mut().load_groups(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
