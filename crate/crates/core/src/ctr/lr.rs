//! Logistic regression on raw encoded features or on field embeddings.

use std::sync::atomic::{AtomicBool, Ordering};

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ctr::embedding::EmbeddingLayer;
use crate::ctr::model::{logit_bce, CtrModel, ModelKind};
use crate::data::ctr::{FeatureSchema, FieldValue, Sample};
use crate::error::{Error, Result};
use crate::nn::layers::sigmoid;
use crate::nn::params::{ParamId, ParameterSet, OUTPUT};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

static SHIFT_WARNED: AtomicBool = AtomicBool::new(false);

/// `sigmoid(wᵀx + b)` with `x` the concatenated one-hot, multi-hot and
/// numeric encodings of every field.
#[derive(Clone, Debug)]
pub struct LrRaw<T: Scalar> {
    schema: FeatureSchema,
    params: ParameterSet<T>,
    offsets: Vec<usize>,
    w: ParamId,
    b: ParamId,
}

impl<T: Scalar> LrRaw<T> {
    pub fn new<R: Rng + ?Sized>(schema: FeatureSchema, rng: &mut R) -> Self {
        let mut offsets = Vec::with_capacity(schema.len());
        let mut width = 0;
        for f in schema.fields() {
            offsets.push(width);
            width += f.cardinality();
        }
        let mut params = ParameterSet::new();
        let w = params.register(OUTPUT, "w", Tensor::xavier_uniform(width.max(1), 1, rng));
        let b = params.register(OUTPUT, "b", Tensor::zeros(1, 1));
        LrRaw {
            schema,
            params,
            offsets,
            w,
            b,
        }
    }

    /// Width of the raw input vector.
    pub fn input_width(&self) -> usize {
        self.params.value(self.w).rows()
    }

    /// Active coordinates of the raw input and their values.
    fn active(&self, sample: &Sample) -> Result<Vec<(usize, T)>> {
        self.schema.validate(sample)?;
        let mut out = Vec::new();
        for (off, v) in self.offsets.iter().zip(&sample.values) {
            match v {
                FieldValue::Numeric(x) => {
                    if !(-0.5..=1.5).contains(x) && !SHIFT_WARNED.swap(true, Ordering::Relaxed) {
                        warn!("numeric feature {x} far outside the training range [0, 1]");
                    }
                    out.push((*off, T::lit(*x)));
                }
                FieldValue::Categorical(i) => out.push((off + i, T::one())),
                FieldValue::Multi(ix) => {
                    let mut ix = ix.clone();
                    ix.sort_unstable();
                    ix.dedup();
                    out.extend(ix.into_iter().map(|i| (off + i, T::one())));
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> CtrModel<T> for LrRaw<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::LrRaw
    }

    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    fn logit(&self, sample: &Sample) -> Result<T> {
        let w = self.params.value(self.w).as_slice();
        let mut z = self.params.value(self.b).get(0, 0);
        for (i, x) in self.active(sample)? {
            z += w[i] * x;
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("lr-raw logit".into()));
        }
        Ok(z)
    }

    fn accumulate(&mut self, sample: &Sample, _train: bool, _rng: &mut ChaCha8Rng, scale: T) -> Result<T> {
        let z = self.logit(sample)?;
        let y = T::from_u8(sample.label).expect("label");
        let dz = (sigmoid(z) - y) * scale;
        for (i, x) in self.active(sample)? {
            self.params.grad_mut(self.w).as_mut_slice()[i] += dz * x;
        }
        self.params.grad_mut(self.b).as_mut_slice()[0] += dz;
        Ok(logit_bce(z, sample.label))
    }

    fn clone_box(&self) -> Box<dyn CtrModel<T>> {
        Box::new(self.clone())
    }
}

/// Field embeddings concatenated into one `M·d` vector, then logistic
/// regression.
#[derive(Clone, Debug)]
pub struct LrEmb<T: Scalar> {
    schema: FeatureSchema,
    params: ParameterSet<T>,
    embedding: EmbeddingLayer,
    w: ParamId,
    b: ParamId,
}

impl<T: Scalar> LrEmb<T> {
    pub fn new<R: Rng + ?Sized>(schema: FeatureSchema, dim: usize, rng: &mut R) -> Self {
        let mut params = ParameterSet::new();
        let embedding = EmbeddingLayer::register(&mut params, &schema, dim, rng);
        let width = schema.len() * dim;
        let w = params.register(OUTPUT, "w", Tensor::xavier_uniform(width, 1, rng));
        let b = params.register(OUTPUT, "b", Tensor::zeros(1, 1));
        LrEmb {
            schema,
            params,
            embedding,
            w,
            b,
        }
    }

    /// Length of the concatenated embedding fed to the regression.
    pub fn input_width(&self) -> usize {
        self.params.value(self.w).rows()
    }

    fn forward(&self, sample: &Sample) -> Result<(Tensor<T>, T)> {
        let e = self.embedding.forward(&self.params, &self.schema, sample)?;
        let w = self.params.value(self.w).as_slice();
        let z = self.params.value(self.b).get(0, 0)
            + e.as_slice().iter().zip(w).map(|(&a, &b)| a * b).sum::<T>();
        if !z.is_finite() {
            return Err(Error::NonFinite("lr-emb logit".into()));
        }
        Ok((e, z))
    }
}

impl<T: Scalar> CtrModel<T> for LrEmb<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::LrEmb
    }

    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    fn logit(&self, sample: &Sample) -> Result<T> {
        Ok(self.forward(sample)?.1)
    }

    fn accumulate(&mut self, sample: &Sample, _train: bool, _rng: &mut ChaCha8Rng, scale: T) -> Result<T> {
        let (e, z) = self.forward(sample)?;
        let y = T::from_u8(sample.label).expect("label");
        let dz = (sigmoid(z) - y) * scale;
        let d_e = self.params.value(self.w).scaled(dz).reshape(e.rows(), e.cols())?;
        self.params.grad_mut(self.w).axpy(dz, &e.clone().reshape(e.len(), 1)?)?;
        self.params.grad_mut(self.b).as_mut_slice()[0] += dz;
        self.embedding.backward(&mut self.params, sample, &d_e);
        Ok(logit_bce(z, sample.label))
    }

    fn clone_box(&self) -> Box<dyn CtrModel<T>> {
        Box::new(self.clone())
    }
}
