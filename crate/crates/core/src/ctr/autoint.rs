//! AutoInt: field embeddings, stacked multi-head self-attention over fields,
//! and a one-hidden-layer output network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ctr::embedding::EmbeddingLayer;
use crate::ctr::model::{logit_bce, CtrModel, ModelConfig, ModelKind};
use crate::data::ctr::{FeatureSchema, Sample};
use crate::error::{Error, Result};
use crate::nn::layers::{
    affine_backward, affine_forward, dropout, dropout_backward, relu_backward, relu_forward, sigmoid,
    softmax_backward, softmax_rowwise,
};
use crate::nn::params::{ParamId, ParameterSet, INTERACTION, OUTPUT};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
struct AttentionLayer {
    query: ParamId,
    key: ParamId,
    value: ParamId,
    /// Only when the input and output widths differ.
    residual: Option<ParamId>,
    heads: usize,
}

/// Intermediates of one attention layer for one sample.
struct AttentionCache<T> {
    input: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    /// Per head, `M × M` attention weights.
    alpha: Vec<Tensor<T>>,
    dropout_mask: Option<Tensor<T>>,
    pre_activation: Tensor<T>,
}

impl AttentionLayer {
    fn register<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParameterSet<T>,
        index: usize,
        d_in: usize,
        d_out: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        let mut reg = |name: &str| params.register(INTERACTION, format!("layer{index}.{name}"), Tensor::xavier_uniform(d_in, d_out, rng));
        let query = reg("query");
        let key = reg("key");
        let value = reg("value");
        let residual = (d_in != d_out).then(|| reg("residual"));
        AttentionLayer {
            query,
            key,
            value,
            residual,
            heads,
        }
    }

    fn forward<T: Scalar>(
        &self,
        params: &ParameterSet<T>,
        e: &Tensor<T>,
        p_drop: f64,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, AttentionCache<T>)> {
        let q = e.matmul(params.value(self.query))?;
        let k = e.matmul(params.value(self.key))?;
        let v = e.matmul(params.value(self.value))?;
        let width = q.cols();
        let dh = width / self.heads;
        let mut concat = Tensor::zeros(e.rows(), width);
        let mut alpha = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let scores = q.col_block(lo, hi).matmul_nt(&k.col_block(lo, hi))?;
            let a = softmax_rowwise(&scores);
            concat.set_col_block(lo, &a.matmul(&v.col_block(lo, hi))?);
            alpha.push(a);
        }
        let (dropped, mask) = dropout(&concat, p_drop, train, rng)?;
        let residual = match self.residual {
            Some(id) => e.matmul(params.value(id))?,
            None => e.clone(),
        };
        let z = dropped.add(&residual)?;
        let out = relu_forward(&z);
        Ok((
            out,
            AttentionCache {
                input: e.clone(),
                q,
                k,
                v,
                alpha,
                dropout_mask: mask,
                pre_activation: z,
            },
        ))
    }

    /// Returns the gradient with respect to the layer input.
    fn backward<T: Scalar>(&self, params: &mut ParameterSet<T>, c: &AttentionCache<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let dz = relu_backward(&c.pre_activation, d_out)?;
        let mut d_input = match self.residual {
            Some(id) => {
                params.grad_mut(id).add_assign(&c.input.matmul_tn(&dz)?)?;
                dz.matmul_nt(params.value(id))?
            }
            None => dz.clone(),
        };
        let d_concat = dropout_backward(c.dropout_mask.as_ref(), &dz)?;
        let width = c.q.cols();
        let dh = width / self.heads;
        let rows = c.input.rows();
        let (mut dq, mut dk, mut dv) = (Tensor::zeros(rows, width), Tensor::zeros(rows, width), Tensor::zeros(rows, width));
        for (h, a) in c.alpha.iter().enumerate() {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let d_head = d_concat.col_block(lo, hi);
            let (qh, kh, vh) = (c.q.col_block(lo, hi), c.k.col_block(lo, hi), c.v.col_block(lo, hi));
            let d_alpha = d_head.matmul_nt(&vh)?;
            dv.set_col_block(lo, &a.matmul_tn(&d_head)?);
            let d_scores = softmax_backward(a, &d_alpha)?;
            dq.set_col_block(lo, &d_scores.matmul(&kh)?);
            dk.set_col_block(lo, &d_scores.matmul_tn(&qh)?);
        }
        for (id, d) in [(self.query, &dq), (self.key, &dk), (self.value, &dv)] {
            params.grad_mut(id).add_assign(&c.input.matmul_tn(d)?)?;
            d_input.add_assign(&d.matmul_nt(params.value(id))?)?;
        }
        Ok(d_input)
    }
}

#[derive(Clone, Debug)]
pub struct AutoInt<T: Scalar> {
    schema: FeatureSchema,
    config: ModelConfig,
    params: ParameterSet<T>,
    embedding: EmbeddingLayer,
    layers: Vec<AttentionLayer>,
    hidden_w: ParamId,
    hidden_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

struct ForwardCache<T> {
    embedded: Tensor<T>,
    layers: Vec<AttentionCache<T>>,
    flat: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden_mask: Option<Tensor<T>>,
    hidden: Tensor<T>,
}

impl<T: Scalar> AutoInt<T> {
    pub fn new<R: Rng + ?Sized>(schema: FeatureSchema, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterSet::new();
        let embedding = EmbeddingLayer::register(&mut params, &schema, config.embedding_dim, rng);
        let mut layers = Vec::with_capacity(config.attention_layers);
        let mut width = config.embedding_dim;
        for i in 0..config.attention_layers {
            layers.push(AttentionLayer::register(&mut params, i, width, config.attention_size, config.heads, rng));
            width = config.attention_size;
        }
        let flat = schema.len() * width;
        let hidden_w = params.register(OUTPUT, "hidden.w", Tensor::xavier_uniform(flat, config.hidden_units, rng));
        let hidden_b = params.register(OUTPUT, "hidden.b", Tensor::zeros(1, config.hidden_units));
        let out_w = params.register(OUTPUT, "out.w", Tensor::xavier_uniform(config.hidden_units, 1, rng));
        let out_b = params.register(OUTPUT, "out.b", Tensor::zeros(1, 1));
        Ok(AutoInt {
            schema,
            config: *config,
            params,
            embedding,
            layers,
            hidden_w,
            hidden_b,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn forward(&self, sample: &Sample, train: bool, rng: &mut ChaCha8Rng) -> Result<(T, ForwardCache<T>)> {
        let embedded = self.embedding.forward(&self.params, &self.schema, sample)?;
        let mut x = embedded.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&self.params, &x, self.config.dropout, train, rng)?;
            caches.push(c);
            x = y;
        }
        let flat = x.reshape(1, self.schema.len() * self.flat_width())?;
        let hidden_pre = affine_forward(&flat, self.params.value(self.hidden_w), self.params.value(self.hidden_b))?;
        let (hidden, hidden_mask) = dropout(&relu_forward(&hidden_pre), self.config.dropout, train, rng)?;
        let z = affine_forward(&hidden, self.params.value(self.out_w), self.params.value(self.out_b))?.get(0, 0);
        if !z.is_finite() {
            return Err(Error::NonFinite("autoint logit".into()));
        }
        Ok((
            z,
            ForwardCache {
                embedded,
                layers: caches,
                flat,
                hidden_pre,
                hidden_mask,
                hidden,
            },
        ))
    }

    fn flat_width(&self) -> usize {
        if self.layers.is_empty() {
            self.config.embedding_dim
        } else {
            self.config.attention_size
        }
    }

    /// Attention weights of every layer and head for one sample, in
    /// evaluation mode.
    pub fn attention_weights(&self, sample: &Sample) -> Result<Vec<Vec<Tensor<T>>>> {
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let (_, cache) = self.forward(sample, false, &mut rng)?;
        Ok(cache.layers.into_iter().map(|c| c.alpha).collect())
    }
}

impl<T: Scalar> CtrModel<T> for AutoInt<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::AutoInt
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
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        Ok(self.forward(sample, false, &mut rng)?.0)
    }

    fn accumulate(&mut self, sample: &Sample, train: bool, rng: &mut ChaCha8Rng, scale: T) -> Result<T> {
        let (z, c) = self.forward(sample, train, rng)?;
        let y = T::from_u8(sample.label).expect("label");
        let dz = Tensor::scalar((sigmoid(z) - y) * scale);

        let g = affine_backward(&c.hidden, self.params.value(self.out_w), &dz)?;
        self.params.grad_mut(self.out_w).add_assign(&g.weight)?;
        self.params.grad_mut(self.out_b).add_assign(&g.bias)?;
        let d_hidden = relu_backward(&c.hidden_pre, &dropout_backward(c.hidden_mask.as_ref(), &g.input)?)?;
        let g = affine_backward(&c.flat, self.params.value(self.hidden_w), &d_hidden)?;
        self.params.grad_mut(self.hidden_w).add_assign(&g.weight)?;
        self.params.grad_mut(self.hidden_b).add_assign(&g.bias)?;

        let mut d_x = g.input.reshape(self.schema.len(), self.flat_width())?;
        for (layer, cache) in self.layers.iter().zip(&c.layers).rev() {
            d_x = layer.backward(&mut self.params, cache, &d_x)?;
        }
        debug_assert_eq!(d_x.shape(), c.embedded.shape());
        self.embedding.backward(&mut self.params, sample, &d_x);
        Ok(logit_bce(z, sample.label))
    }

    fn clone_box(&self) -> Box<dyn CtrModel<T>> {
        Box::new(self.clone())
    }
}
