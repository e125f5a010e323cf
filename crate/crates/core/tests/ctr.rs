mod common;

use fedrec_core::ctr::autoint::AutoInt;
use fedrec_core::ctr::embedding::embed_sample;
use fedrec_core::ctr::model::{build_model, CtrModel, ModelConfig, ModelKind};
use fedrec_core::ctr::train::{train_epochs, ModelCheckpoint};
use fedrec_core::data::ctr::{FieldValue, Sample};
use fedrec_core::nn::optim::OptimizerConfig;
use fedrec_core::nn::params::ParameterSet;
use fedrec_core::nn::tensor::Tensor;
use proptest::prelude::*;
use rand::seq::SliceRandom;

const KINDS: [ModelKind; 3] = [ModelKind::LrRaw, ModelKind::LrEmb, ModelKind::AutoInt];

fn model(kind: ModelKind, seed: u64) -> Box<dyn CtrModel<f64>> {
    let cfg = ModelConfig { kind, embedding_dim: 4, attention_layers: 2, heads: 2, attention_size: 6, hidden_units: 5, dropout: 0.0 };
    build_model::<f64>(&cfg, &common::mixed_schema(), seed).unwrap()
}

fn flat(p: &ParameterSet<f64>) -> Vec<f64> {
    p.params().flat_map(|t| t.value.as_slice().to_vec()).collect()
}

proptest! {
    #![proptest_config(common::config(128))]

    #[test]
    fn multi_valued_embedding_ignores_index_order(
        mut ix in prop::collection::vec(1usize..6, 1..8),
        seed in any::<u64>(),
    ) {
        let schema = common::mixed_schema();
        let mut g = common::rng(seed);
        let tables: Vec<Tensor<f64>> = schema.fields().iter().map(|f| common::uniform(f.cardinality(), 3, -1.0, 1.0, &mut g)).collect();
        let refs: Vec<&Tensor<f64>> = tables.iter().collect();
        let mut s = common::mixed_samples(1, seed).remove(0);
        s.values[2] = FieldValue::Multi(ix.clone());
        let before = embed_sample(&schema, &refs, &s).unwrap();
        ix.shuffle(&mut g);
        s.values[2] = FieldValue::Multi(ix);
        prop_assert_eq!(before, embed_sample(&schema, &refs, &s).unwrap());
    }

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), layers in 1usize..4) {
        let cfg = ModelConfig { attention_layers: layers, embedding_dim: 8, dropout: 0.0, ..ModelConfig::default() };
        let m = AutoInt::<f64>::new(common::mixed_schema(), &cfg, &mut common::rng(seed)).unwrap();
        for s in common::mixed_samples(4, seed) {
            let weights = m.attention_weights(&s).unwrap();
            prop_assert_eq!(weights.len(), layers);
            for head in weights.iter().flatten() {
                for r in 0..head.rows() {
                    prop_assert!((head.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn evaluation_is_per_sample(seed in any::<u64>(), k in 0usize..3) {
        let m = model(KINDS[k], seed);
        let samples = common::mixed_samples(12, seed);
        let all = m.predict_batch(&samples).unwrap();
        prop_assert!(all.iter().all(|&p| p > 0.0 && p < 1.0));
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut common::rng(seed ^ 1));
        let subset: Vec<Sample> = order[..5].iter().map(|&i| samples[i].clone()).collect();
        for (j, p) in m.predict_batch(&subset).unwrap().into_iter().enumerate() {
            prop_assert_eq!(p, all[order[j]]);
        }
    }
}

/// One epoch with a single full batch and SGD against a step built from
/// per-sample gradients accumulated by hand.
#[test]
fn full_batch_epoch_is_one_gradient_step() {
    let lr = 0.3;
    for kind in KINDS {
        let samples = common::mixed_samples(9, 5);
        let start = model(kind, 8);
        let mut trained = start.clone();
        let mut opt = OptimizerConfig::Sgd { lr }.build::<f64>();
        train_epochs(trained.as_mut(), &samples, &mut opt, samples.len(), 1, 0).unwrap();

        let mut total: Vec<f64> = vec![0.0; flat(start.params()).len()];
        for s in &samples {
            let mut m = start.clone();
            m.params_mut().zero_grad();
            m.accumulate(s, true, &mut common::rng(0), 1.0).unwrap();
            for (t, g) in total.iter_mut().zip(m.params().params().flat_map(|p| p.grad.as_slice().to_vec())) {
                *t += g;
            }
        }
        let expected: Vec<f64> = flat(start.params()).iter().zip(&total).map(|(w, g)| w - lr * g / samples.len() as f64).collect();
        for (a, b) in flat(trained.params()).iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12, "{kind:?}: {a} vs {b}");
        }
    }
}

#[test]
fn training_is_reproducible() {
    for kind in KINDS {
        let cfg = ModelConfig { kind, dropout: 0.3, embedding_dim: 4, ..ModelConfig::default() };
        let run = || {
            let mut m = build_model::<f64>(&cfg, &common::mixed_schema(), 4).unwrap();
            let mut opt = OptimizerConfig::default().build::<f64>();
            let trace = train_epochs(m.as_mut(), &common::mixed_samples(40, 2), &mut opt, 8, 3, 9).unwrap();
            (trace, m.params().to_json_bytes().unwrap())
        };
        assert_eq!(run(), run(), "{kind:?}");
    }
}

#[test]
fn training_lowers_the_loss() {
    for kind in KINDS {
        let mut m = model(kind, 1);
        let samples = common::mixed_samples(64, 3);
        let before = m.mean_loss(&samples).unwrap();
        let mut opt = OptimizerConfig::Sgd { lr: 0.5 }.build::<f64>();
        train_epochs(m.as_mut(), &samples, &mut opt, 16, 30, 0).unwrap();
        assert!(m.mean_loss(&samples).unwrap() < before, "{kind:?}");
    }
}

#[test]
fn checkpoint_restores_predictions_and_rejects_other_schemas() {
    for kind in KINDS {
        let cfg = ModelConfig { kind, ..ModelConfig::default() };
        let m = build_model::<f64>(&cfg, &common::mixed_schema(), 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ModelCheckpoint::capture(m.as_ref(), &cfg).save(&path).unwrap();
        let ckpt = ModelCheckpoint::load(&path).unwrap();
        let back = ckpt.restore::<f64>(Some(&common::mixed_schema())).unwrap();
        let samples = common::mixed_samples(5, 1);
        assert_eq!(back.predict_batch(&samples).unwrap(), m.predict_batch(&samples).unwrap());
        let mut other = common::mixed_schema().fields().to_vec();
        other.pop();
        let other = fedrec_core::data::ctr::FeatureSchema::new(other).unwrap();
        assert!(ckpt.restore::<f64>(Some(&other)).is_err());
    }
}

#[test]
fn groups_follow_the_naming_convention() {
    for kind in KINDS {
        let m = model(kind, 0);
        for g in m.params().group_names() {
            assert!(fedrec_core::nn::params::GROUP_NAMES.contains(&g), "{kind:?}: {g}");
        }
    }
}
