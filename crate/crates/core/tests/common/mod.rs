#![allow(dead_code)]

use fedrec_core::ctr::embedding::EmbeddingLayer;
use fedrec_core::ctr::model::{build_model, BatchObjective, ModelConfig, ModelKind};
use fedrec_core::data::ctr::{FeatureSchema, FieldKind, FieldSpec, FieldValue, Sample};
use fedrec_core::error::Result;
use fedrec_core::nn::gradcheck::{gradient_check, Differentiable, GradCheckConfig, GradCheckReport};
use fedrec_core::nn::layers::{
    affine_backward, affine_forward, dropout, dropout_backward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, softmax_backward, softmax_rowwise,
};
use fedrec_core::nn::loss::bce_loss;
use fedrec_core::nn::params::{ParameterSet, EMBEDDING, OUTPUT};
use fedrec_core::nn::tensor::Tensor;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-seed proptest configuration so every run draws the same cases.
pub fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

type Objective = Box<dyn Fn(&ParameterSet<f64>) -> Result<(f64, Vec<Tensor<f64>>)>>;

/// A layer wrapped as `loss = Σ r ⊙ layer(params)`, with gradients for every
/// registered tensor in registration order.
pub struct Probe {
    params: ParameterSet<f64>,
    objective: Objective,
}

impl Differentiable<f64> for Probe {
    fn parameters(&self) -> &ParameterSet<f64> {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut ParameterSet<f64> {
        &mut self.params
    }

    fn loss(&mut self) -> Result<f64> {
        Ok((self.objective)(&self.params)?.0)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let (loss, grads) = (self.objective)(&self.params)?;
        for (p, g) in self.params.params_mut().zip(grads) {
            p.grad = g;
        }
        Ok(loss)
    }
}

fn weighted(y: &Tensor<f64>, r: &Tensor<f64>) -> Result<f64> {
    Ok(y.hadamard(r)?.sum())
}

fn tensors(p: &ParameterSet<f64>) -> Vec<&Tensor<f64>> {
    p.params().map(|t| &t.value).collect()
}

fn probe(inputs: Vec<(&str, Tensor<f64>)>, objective: Objective) -> Box<dyn Differentiable<f64>> {
    let mut params = ParameterSet::new();
    for (name, t) in inputs {
        params.register(OUTPUT, name, t);
    }
    Box::new(Probe { params, objective })
}

fn away_from_zero(t: Tensor<f64>) -> Tensor<f64> {
    t.map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

pub fn layer_probes() -> Vec<(&'static str, Box<dyn Differentiable<f64>>)> {
    let mut g = rng(17);
    let x = uniform(4, 3, -1.0, 1.0, &mut g);
    let w = uniform(3, 5, -1.0, 1.0, &mut g);
    let b = uniform(1, 5, -1.0, 1.0, &mut g);
    let r5 = uniform(4, 5, -1.0, 1.0, &mut g);
    let r3 = uniform(4, 3, -1.0, 1.0, &mut g);
    let mut out: Vec<(&'static str, Box<dyn Differentiable<f64>>)> = Vec::new();

    let r = r5.clone();
    out.push((
        "affine",
        probe(
            vec![("x", x.clone()), ("w", w), ("b", b)],
            Box::new(move |p| {
                let t = tensors(p);
                let y = affine_forward(t[0], t[1], t[2])?;
                let gr = affine_backward(t[0], t[1], &r)?;
                Ok((weighted(&y, &r)?, vec![gr.input, gr.weight, gr.bias]))
            }),
        ),
    ));

    let r = r3.clone();
    out.push((
        "relu",
        probe(
            vec![("x", away_from_zero(x.clone()))],
            Box::new(move |p| {
                let t = tensors(p);
                Ok((weighted(&relu_forward(t[0]), &r)?, vec![relu_backward(t[0], &r)?]))
            }),
        ),
    ));

    let r = r3.clone();
    out.push((
        "sigmoid",
        probe(
            vec![("x", x.scaled(3.0))],
            Box::new(move |p| {
                let y = sigmoid_forward(tensors(p)[0]);
                Ok((weighted(&y, &r)?, vec![sigmoid_backward(&y, &r)?]))
            }),
        ),
    ));

    let r = r3.clone();
    out.push((
        "softmax",
        probe(
            vec![("x", x.scaled(2.0))],
            Box::new(move |p| {
                let y = softmax_rowwise(tensors(p)[0]);
                Ok((weighted(&y, &r)?, vec![softmax_backward(&y, &r)?]))
            }),
        ),
    ));

    let r = r3.clone();
    out.push((
        "dropout",
        probe(
            vec![("x", x.clone())],
            Box::new(move |p| {
                let (y, mask) = dropout(tensors(p)[0], 0.4, true, &mut rng(3))?;
                Ok((weighted(&y, &r)?, vec![dropout_backward(mask.as_ref(), &r)?]))
            }),
        ),
    ));

    let labels: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
    out.push((
        "bce",
        probe(
            vec![("p", uniform(6, 1, 0.05, 0.95, &mut g))],
            Box::new(move |p| {
                let (loss, grad) = bce_loss(tensors(p)[0].as_slice(), &labels)?;
                Ok((loss, vec![Tensor::from_vec(grad.len(), 1, grad)?]))
            }),
        ),
    ));

    out.push(("embedding", embedding_probe(&mut g)));
    out
}

struct EmbeddingProbe {
    params: ParameterSet<f64>,
    layer: EmbeddingLayer,
    schema: FeatureSchema,
    samples: Vec<Sample>,
    r: Tensor<f64>,
}

impl Differentiable<f64> for EmbeddingProbe {
    fn parameters(&self) -> &ParameterSet<f64> {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut ParameterSet<f64> {
        &mut self.params
    }

    fn loss(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for s in &self.samples {
            total += weighted(&self.layer.forward(&self.params, &self.schema, s)?, &self.r)?;
        }
        Ok(total)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.params.zero_grad();
        for s in &self.samples {
            self.layer.backward(&mut self.params, s, &self.r);
        }
        self.loss()
    }
}

fn embedding_probe(g: &mut ChaCha8Rng) -> Box<dyn Differentiable<f64>> {
    let schema = mixed_schema();
    let mut params = ParameterSet::new();
    let layer = EmbeddingLayer::register(&mut params, &schema, 3, g);
    for p in params.params_mut() {
        p.value = p.value.scaled(50.0);
    }
    Box::new(EmbeddingProbe {
        params,
        layer,
        samples: mixed_samples(5, 4),
        r: uniform(schema.len(), 3, -1.0, 1.0, g),
        schema,
    })
}

/// A numeric, a categorical and a multi-valued field.
pub fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FieldSpec::numeric("n"),
        FieldSpec::with_values("c", FieldKind::Categorical, ["a", "b", "c", "d"]),
        FieldSpec::with_values("m", FieldKind::MultiValued, ["g1", "g2", "g3", "g4", "g5"]),
    ])
    .unwrap()
}

pub fn mixed_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut g = rng(seed);
    (0..n)
        .map(|i| {
            let mut multi: Vec<usize> = (1..6).filter(|_| g.random_bool(0.5)).collect();
            if multi.is_empty() {
                multi.push(g.random_range(1..6));
            }
            Sample {
                values: vec![
                    FieldValue::Numeric(g.random_range(0.0..1.0)),
                    FieldValue::Categorical(g.random_range(0..5)),
                    FieldValue::Multi(multi),
                ],
                label: g.random_range(0..2),
                user: i as u32,
                item: i as u32,
            }
        })
        .collect()
}

pub fn tiny_model_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        embedding_dim: 4,
        attention_layers: 1,
        heads: 2,
        attention_size: 4,
        hidden_units: 3,
        dropout: 0.0,
    }
}

fn two_field_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FieldSpec::with_values("c", FieldKind::Categorical, ["a", "b", "c"]),
        FieldSpec::with_values("m", FieldKind::MultiValued, ["g1", "g2", "g3"]),
    ])
    .unwrap()
}

fn two_field_samples() -> Vec<Sample> {
    (0..6)
        .map(|i| Sample {
            values: vec![FieldValue::Categorical(i % 4), FieldValue::Multi(vec![1 + i % 3, 3])],
            label: (i % 2) as u8,
            user: i as u32,
            item: i as u32,
        })
        .collect()
}

/// Scales the embedding tables up so the model is far from the flat region
/// around its small initialisation.
fn spread(params: &mut ParameterSet<f64>) {
    if let Some(g) = params.group_mut(EMBEDDING) {
        for p in &mut g.params {
            p.value = p.value.scaled(40.0);
        }
    }
}

/// Finite-difference reports for every layer kernel and for each model on a
/// small batch.
pub fn gradient_reports() -> Vec<(String, GradCheckReport)> {
    let cfg = GradCheckConfig::default();
    let mut out = Vec::new();
    for (name, mut p) in layer_probes() {
        out.push((name.to_string(), gradient_check(p.as_mut(), &cfg).unwrap()));
    }
    for kind in [ModelKind::LrRaw, ModelKind::LrEmb] {
        let mut m = build_model::<f64>(&tiny_model_config(kind), &mixed_schema(), 2).unwrap();
        spread(m.params_mut());
        let batch = mixed_samples(6, 9);
        out.push((kind.name().to_string(), gradient_check(&mut BatchObjective { model: m.as_mut(), batch: &batch }, &cfg).unwrap()));
    }
    let mut m = build_model::<f64>(&tiny_model_config(ModelKind::AutoInt), &two_field_schema(), 3).unwrap();
    spread(m.params_mut());
    let batch = two_field_samples();
    out.push(("autoint".to_string(), gradient_check(&mut BatchObjective { model: m.as_mut(), batch: &batch }, &cfg).unwrap()));
    out
}
