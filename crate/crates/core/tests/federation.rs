mod common;

use std::collections::BTreeSet;

use fedrec_core::ctr::model::{build_model, CtrModel, ModelConfig, ModelKind};
use fedrec_core::data::ctr::{FeatureSchema, FieldKind, FieldSpec, FieldValue, Sample};
use fedrec_core::federation::fedavg::{fedavg_aggregate, local_update, zero_sum_noise, LocalConfig};
use fedrec_core::federation::partition::{partition_cluster, partition_iid, ClientPartition, ClusterConfig};
use fedrec_core::federation::rounds::{plan_param_count, run_rounds, RoundConfig};
use fedrec_core::nn::optim::OptimizerConfig;
use fedrec_core::nn::params::{ParameterSet, EMBEDDING, GROUP_NAMES, INTERACTION, OUTPUT};
use fedrec_core::nn::tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, scale: f64) -> ParameterSet<f64> {
    let mut p = ParameterSet::new();
    p.register(EMBEDDING, "table", Tensor::from_fn(3, 2, |_, _| scale * rng.random_range(-1.0..1.0)));
    p.register(INTERACTION, "query", Tensor::from_fn(2, 2, |_, _| scale * rng.random_range(-1.0..1.0)));
    p.register(OUTPUT, "w", Tensor::from_fn(4, 1, |_, _| scale * rng.random_range(-1.0..1.0)));
    p
}

fn all_groups() -> Vec<&'static str> {
    GROUP_NAMES.to_vec()
}

fn flat(p: &ParameterSet<f64>) -> Vec<f64> {
    p.params().flat_map(|t| t.value.as_slice().to_vec()).collect()
}

proptest! {
    #![proptest_config(common::config(200))]

    #[test]
    fn aggregate_is_a_convex_combination(seed in any::<u64>(), sizes in prop::collection::vec(1usize..500, 1..6), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients: Vec<ParameterSet<f64>> = sizes.iter().map(|_| random_set(&mut rng, scale)).collect();
        let agg = flat(&fedavg_aggregate(&clients, &sizes, &all_groups()).unwrap());
        let values: Vec<Vec<f64>> = clients.iter().map(flat).collect();
        for (i, &a) in agg.iter().enumerate() {
            let lo = values.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
            let hi = values.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * scale;
            prop_assert!(a >= lo - slack && a <= hi + slack, "{a} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn equal_sizes_give_the_plain_mean(seed in any::<u64>(), k in 1usize..6, n in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients: Vec<ParameterSet<f64>> = (0..k).map(|_| random_set(&mut rng, 1.0)).collect();
        let agg = flat(&fedavg_aggregate(&clients, &vec![n; k], &all_groups()).unwrap());
        let values: Vec<Vec<f64>> = clients.iter().map(flat).collect();
        for (i, &a) in agg.iter().enumerate() {
            let mean = values.iter().map(|v| v[i]).sum::<f64>() / k as f64;
            prop_assert!((a - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_clients_aggregate_to_themselves(seed in any::<u64>(), sizes in prop::collection::vec(1usize..100, 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let one = random_set(&mut rng, 1.0);
        let agg = fedavg_aggregate(&vec![one.clone(); sizes.len()], &sizes, &all_groups()).unwrap();
        for (a, b) in flat(&agg).iter().zip(flat(&one)) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn zero_sum_noise_leaves_the_aggregate_unchanged(
        seed in any::<u64>(),
        sizes in prop::collection::vec(1usize..1000, 2..7),
        sigma in 0.0f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients: Vec<ParameterSet<f64>> = sizes.iter().map(|_| random_set(&mut rng, 1.0)).collect();
        let mut noised = clients.clone();
        zero_sum_noise(&mut noised, &sizes, &all_groups(), sigma, seed).unwrap();
        let total: usize = sizes.iter().sum();
        let before: Vec<Vec<f64>> = clients.iter().map(flat).collect();
        let after: Vec<Vec<f64>> = noised.iter().map(flat).collect();
        for i in 0..before[0].len() {
            let weighted: f64 = (0..sizes.len()).map(|k| sizes[k] as f64 / total as f64 * (after[k][i] - before[k][i])).sum();
            prop_assert!(weighted.abs() <= 1e-9, "weighted noise sum {weighted}");
        }
        let plain = flat(&fedavg_aggregate(&clients, &sizes, &all_groups()).unwrap());
        let masked = flat(&fedavg_aggregate(&noised, &sizes, &all_groups()).unwrap());
        for (a, b) in plain.iter().zip(&masked) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn iid_partition_reproduces_the_multiset(n in 10usize..300, k in 1usize..11, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let train: Vec<Sample> = (0..n).map(|i| sample(i as u32 % 13, i as u32, (i % 2) as u8)).collect();
        let test: Vec<Sample> = (0..n / 3).map(|i| sample(i as u32 % 13, 10_000 + i as u32, 1)).collect();
        let parts = partition_iid(&train, &test, k, seed).unwrap();
        prop_assert_eq!(parts.len(), k);
        assert_same_multiset(&parts, &train, &test);
        let sizes: Vec<usize> = parts.iter().map(|p| p.n_k()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(parts, partition_iid(&train, &test, k, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(common::config(24))]

    #[test]
    fn cluster_partition_reproduces_the_multiset(seed in any::<u64>(), users in 12u32..40, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for u in 0..users {
            let community = u % 3;
            for _ in 0..rng.random_range(3..10) {
                let item = community * 20 + rng.random_range(0..20);
                let s = sample(u, item, rng.random_range(0..2));
                if rng.random_bool(0.2) { test.push(s) } else { train.push(s) }
            }
        }
        // A user with test data only.
        test.push(sample(9_999, 1, 1));
        let cfg = ClusterConfig { clients: k, rank: 3, ..Default::default() };
        let parts = partition_cluster(&train, &test, &cfg, seed).unwrap();
        prop_assert!(parts.len() <= k);
        assert_same_multiset(&parts, &train, &test);
        for p in &parts {
            let users: BTreeSet<u32> = p.train.iter().map(|s| s.user).collect();
            for other in parts.iter().filter(|o| o.client_id != p.client_id) {
                prop_assert!(other.train.iter().all(|s| !users.contains(&s.user)));
            }
        }
        prop_assert_eq!(parts, partition_cluster(&train, &test, &cfg, seed).unwrap());
    }
}

fn sample(user: u32, item: u32, label: u8) -> Sample {
    Sample {
        values: vec![FieldValue::Categorical(1 + (item as usize % 3)), FieldValue::Numeric((item % 7) as f64 / 7.0)],
        label,
        user,
        item,
    }
}

fn key(s: &Sample) -> (u32, u32, u8) {
    (s.user, s.item, s.label)
}

fn assert_same_multiset(parts: &[ClientPartition], train: &[Sample], test: &[Sample]) {
    let sorted = |v: Vec<&Sample>| {
        let mut k: Vec<_> = v.into_iter().map(key).collect();
        k.sort_unstable();
        k
    };
    assert_eq!(sorted(parts.iter().flat_map(|p| &p.train).collect()), sorted(train.iter().collect()));
    assert_eq!(sorted(parts.iter().flat_map(|p| &p.test).collect()), sorted(test.iter().collect()));
}

fn schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FieldSpec::with_values("c", FieldKind::Categorical, ["a", "b", "c"]),
        FieldSpec::numeric("n"),
    ])
    .unwrap()
}

fn client_data(n: usize, offset: u32) -> Vec<Sample> {
    (0..n as u32).map(|i| sample(i % 5, offset + i, ((i + offset) % 3 == 0) as u8)).collect()
}

#[test]
fn fedsgd_round_equals_one_pooled_gradient_step() {
    let sgd = OptimizerConfig::Sgd { lr: 0.5 };
    for kind in [ModelKind::LrRaw, ModelKind::LrEmb] {
        let cfg = ModelConfig { kind, embedding_dim: 4, ..Default::default() };
        let initial = build_model::<f64>(&cfg, &schema(), 3).unwrap();
        let datasets = [client_data(7, 0), client_data(12, 100), client_data(3, 7)];
        let sizes: Vec<usize> = datasets.iter().map(Vec::len).collect();
        let global = initial.params().subset(&all_groups());
        let updates: Vec<ParameterSet<f64>> = datasets
            .iter()
            .map(|d| {
                let mut m = initial.clone();
                let local = LocalConfig { epochs: 1, batch_size: d.len(), optimizer: sgd };
                local_update(m.as_mut(), initial.params(), &global, d, &local, 0).unwrap()
            })
            .collect();
        let federated = fedavg_aggregate(&updates, &sizes, &all_groups()).unwrap();

        let pooled: Vec<Sample> = datasets.concat();
        let mut central = initial.clone();
        central.params_mut().zero_grad();
        let refs: Vec<&Sample> = pooled.iter().collect();
        central.forward_backward(&refs, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        sgd.build::<f64>().step(central.params_mut()).unwrap();

        for (a, b) in flat(&federated).iter().zip(flat(central.params())) {
            assert!((a - b).abs() <= 1e-10, "{kind:?}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_epochs_return_the_loaded_parameters() {
    let cfg = ModelConfig { kind: ModelKind::LrEmb, embedding_dim: 3, ..Default::default() };
    let mut model = build_model::<f64>(&cfg, &schema(), 1).unwrap();
    let other = build_model::<f64>(&cfg, &schema(), 2).unwrap();
    let global = other.params().subset(&[EMBEDDING]);
    let local = LocalConfig { epochs: 0, batch_size: 4, optimizer: OptimizerConfig::default() };
    let state = model.params().clone();
    let out = local_update(model.as_mut(), &state, &global, &client_data(5, 0), &local, 0).unwrap();
    assert_eq!(out.group(EMBEDDING), other.params().group(EMBEDDING));
    assert_eq!(out.group(OUTPUT), state.group(OUTPUT));
    assert!(local_update(model.as_mut(), &state, &global, &[], &local, 0).is_err());
}

fn tiny_autoint() -> Box<dyn CtrModel<f64>> {
    let cfg = ModelConfig {
        kind: ModelKind::AutoInt,
        embedding_dim: 4,
        attention_layers: 1,
        heads: 2,
        attention_size: 4,
        hidden_units: 3,
        dropout: 0.0,
    };
    build_model::<f64>(&cfg, &schema(), 5).unwrap()
}

fn partitions() -> Vec<ClientPartition> {
    (0..3)
        .map(|c| ClientPartition { client_id: c, train: client_data(6 + 2 * c, 10 * c as u32), test: client_data(5, 500 + c as u32) })
        .collect()
}

fn round_config(plan: &[&str], rounds: usize) -> RoundConfig {
    RoundConfig {
        num_clients: 3,
        local_batch: 4,
        rounds,
        plan: plan.iter().map(|s| s.to_string()).collect(),
        optimizer: OptimizerConfig::Sgd { lr: 0.1 },
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn zero_rounds_keep_the_initial_model() {
    let initial = tiny_autoint();
    let out = run_rounds(&round_config(&all_groups(), 0), &partitions(), initial.as_ref(), None).unwrap();
    assert!(out.history.rounds.is_empty());
    assert_eq!(out.global, initial.params().subset(&all_groups()));
}

#[test]
fn bytes_follow_the_plan_parameter_count() {
    let initial = tiny_autoint();
    let full = run_rounds(&round_config(&all_groups(), 2), &partitions(), initial.as_ref(), None).unwrap();
    let emb = run_rounds(&round_config(&[EMBEDDING], 2), &partitions(), initial.as_ref(), None).unwrap();
    assert_eq!(full.history.rounds.len(), 2);
    let rest = plan_param_count(initial.params(), &[INTERACTION, OUTPUT]);
    assert!(rest > 0);
    for (f, e) in full.history.rounds.iter().zip(&emb.history.rounds) {
        assert_eq!(f.participants, vec![0, 1, 2]);
        assert_eq!(f.bytes - e.bytes, (2 * 3 * rest * 8) as u64);
        assert!(f.auc.is_finite() && f.logloss.is_finite());
    }
}

#[test]
fn rounds_do_not_depend_on_thread_count() {
    let initial = tiny_autoint();
    let cfg = RoundConfig { client_fraction: 0.67, noise_sigma: 0.01, ..round_config(&[EMBEDDING, OUTPUT], 3) };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_rounds(&cfg, &partitions(), initial.as_ref(), None).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.global, b.global);
    for (x, y) in a.history.rounds.iter().zip(&b.history.rounds) {
        assert_eq!((x.auc, x.logloss, &x.participants, x.bytes), (y.auc, y.logloss, &y.participants, y.bytes));
        assert_eq!(x.participants.len(), 2);
    }
}

#[test]
fn empty_plan_trains_purely_locally_and_dumps_client_state() {
    let initial = tiny_autoint();
    let dir = tempfile::tempdir().unwrap();
    let out = run_rounds(&round_config(&[], 2), &partitions(), initial.as_ref(), Some(dir.path().to_path_buf())).unwrap();
    assert!(out.global.groups().is_empty());
    assert!(out.history.rounds.iter().all(|r| r.bytes == 0));
    let states: Vec<&ParameterSet<f64>> = (0..3).map(|c| out.store.get(c)).collect();
    assert_ne!(states[0], states[1]);
    for c in 0..3 {
        let dump = out.store.load_dump(c).unwrap();
        assert_eq!(dump.group_names(), initial.params().group_names());
        assert_eq!(flat(&dump), flat(states[c]));
    }
}

#[test]
fn masked_rounds_match_unmasked_ones() {
    let initial = tiny_autoint();
    let plain = run_rounds(&round_config(&all_groups(), 2), &partitions(), initial.as_ref(), None).unwrap();
    let cfg = RoundConfig { noise_sigma: 0.5, ..round_config(&all_groups(), 2) };
    let masked = run_rounds(&cfg, &partitions(), initial.as_ref(), None).unwrap();
    for (a, b) in flat(&plain.global).iter().zip(flat(&masked.global)) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

#[test]
fn history_files() {
    let initial = tiny_autoint();
    let out = run_rounds(&round_config(&all_groups(), 2), &partitions(), initial.as_ref(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.history.write_csv(dir.path().join("history.csv")).unwrap();
    out.history.write_json(dir.path().join("history.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "round,auc,logloss,bytes");
    assert_eq!(lines.len(), 3);
    let back: fedrec_core::federation::RoundHistory = serde_json::from_slice(&std::fs::read(dir.path().join("history.json")).unwrap()).unwrap();
    assert_eq!(back, out.history);
}
