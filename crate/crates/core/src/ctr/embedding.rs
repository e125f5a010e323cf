//! Field embeddings: one table per field, one row per vocabulary entry.

use rand::Rng;

use crate::data::ctr::{FeatureSchema, FieldKind, FieldValue, Sample};
use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParameterSet, EMBEDDING};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

pub const EMBEDDING_INIT_STD: f64 = 0.01;

/// Distinct indices in ascending order, so the mean does not depend on the
/// order the values were listed in.
fn distinct(ix: &[usize]) -> Vec<usize> {
    let mut v = ix.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// `M × d` matrix of field vectors.
///
/// Numeric field: `x·v`. Categorical: the indexed row. Multi-valued: the
/// mean of the distinct indexed rows.
pub fn embed_sample<T: Scalar>(schema: &FeatureSchema, tables: &[&Tensor<T>], sample: &Sample) -> Result<Tensor<T>> {
    if tables.len() != schema.len() || sample.values.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} tables and {} values for {} fields",
            tables.len(),
            sample.values.len(),
            schema.len()
        )));
    }
    let d = tables.first().map_or(0, |t| t.cols());
    let mut out = Tensor::zeros(schema.len().max(1), d.max(1));
    for (f, ((spec, table), value)) in schema.fields().iter().zip(tables).zip(&sample.values).enumerate() {
        let row = out.row_mut(f);
        let bad = || Error::SchemaMismatch(format!("value {value:?} for field `{}`", spec.name));
        match (spec.kind, value) {
            (FieldKind::Numeric, FieldValue::Numeric(x)) => {
                let x = T::lit(*x);
                for (o, &v) in row.iter_mut().zip(table.row(0)) {
                    *o = x * v;
                }
            }
            (FieldKind::Categorical, FieldValue::Categorical(i)) => {
                if *i >= table.rows() {
                    return Err(bad());
                }
                row.copy_from_slice(table.row(*i));
            }
            (FieldKind::MultiValued, FieldValue::Multi(ix)) => {
                let ix = distinct(ix);
                if ix.is_empty() || ix.iter().any(|&i| i >= table.rows()) {
                    return Err(bad());
                }
                let q = T::from_usize_lossy(ix.len());
                for &i in &ix {
                    for (o, &v) in row.iter_mut().zip(table.row(i)) {
                        *o += v;
                    }
                }
                for o in row.iter_mut() {
                    *o /= q;
                }
            }
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

/// Embedding tables registered in the `embedding` parameter group.
#[derive(Clone, Debug)]
pub struct EmbeddingLayer {
    ids: Vec<ParamId>,
    dim: usize,
}

impl EmbeddingLayer {
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParameterSet<T>,
        schema: &FeatureSchema,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let ids = schema
            .fields()
            .iter()
            .map(|f| params.register(EMBEDDING, f.name.clone(), Tensor::random_normal(f.cardinality(), dim, EMBEDDING_INIT_STD, rng)))
            .collect();
        EmbeddingLayer { ids, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward<T: Scalar>(&self, params: &ParameterSet<T>, schema: &FeatureSchema, sample: &Sample) -> Result<Tensor<T>> {
        let tables: Vec<&Tensor<T>> = self.ids.iter().map(|&id| params.value(id)).collect();
        embed_sample(schema, &tables, sample)
    }

    /// Adds the gradient of the loss through `forward` into the table
    /// gradients; `d_embedded` is `M × d`.
    pub fn backward<T: Scalar>(&self, params: &mut ParameterSet<T>, sample: &Sample, d_embedded: &Tensor<T>) {
        for (f, (&id, value)) in self.ids.iter().zip(&sample.values).enumerate() {
            let g = d_embedded.row(f);
            let grad = params.grad_mut(id);
            match value {
                FieldValue::Numeric(x) => {
                    let x = T::lit(*x);
                    for (o, &v) in grad.row_mut(0).iter_mut().zip(g) {
                        *o += x * v;
                    }
                }
                FieldValue::Categorical(i) => {
                    for (o, &v) in grad.row_mut(*i).iter_mut().zip(g) {
                        *o += v;
                    }
                }
                FieldValue::Multi(ix) => {
                    let ix = distinct(ix);
                    let q = T::from_usize_lossy(ix.len());
                    for &i in &ix {
                        for (o, &v) in grad.row_mut(i).iter_mut().zip(g) {
                            *o += v / q;
                        }
                    }
                }
            }
        }
    }
}
