//! Centralized and federated click-through-rate runs on binarised ratings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::info;
use serde::{Deserialize, Serialize};

use crate::ctr::model::{build_model, CtrModel, ModelConfig, ModelKind};
use crate::ctr::train::train_epochs;
use crate::data::ctr::{binarize_ratings, CtrEncoder, EncoderOptions, Sample};
use crate::data::movielens::Dataset;
use crate::data::split::{split_train_val_test, stratified_subsample};
use crate::error::{invalid, Result};
use crate::federation::partition::{partition_cluster, partition_iid, ClientPartition, ClusterConfig};
use crate::federation::rounds::{plan_param_count, run_rounds, RoundConfig, RoundHistory};
use crate::metrics::classification::{auc, logloss, AucMode};
use crate::nn::optim::OptimizerConfig;
use crate::nn::params::ParameterSet;

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Encoded train/validation/test samples and the encoder fitted on train.
#[derive(Clone, Debug)]
pub struct CtrData {
    pub encoder: CtrEncoder,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl CtrData {
    pub fn prepare(ds: &Dataset, options: EncoderOptions, seed: u64) -> Result<Self> {
        Self::prepare_subsampled(ds, options, 1.0, seed)
    }

    /// As [`CtrData::prepare`] on a label-stratified `fraction` of the
    /// binarised ratings.
    pub fn prepare_subsampled(ds: &Dataset, options: EncoderOptions, fraction: f64, seed: u64) -> Result<Self> {
        let mut records = binarize_ratings(ds);
        if fraction < 1.0 {
            records = stratified_subsample(&records, |r| r.label, fraction, seed)?;
        }
        let (train, val, test) = split_train_val_test(&records, SPLIT_RATIOS, seed)?;
        let encoder = CtrEncoder::fit(&train, options)?;
        Ok(CtrData {
            train: encoder.encode_all(&train),
            val: encoder.encode_all(&val),
            test: encoder.encode_all(&test),
            encoder,
        })
    }
}

pub fn group_sizes(params: &ParameterSet<f64>) -> BTreeMap<String, usize> {
    params.groups().iter().map(|g| (g.name.clone(), g.num_scalars())).collect()
}

/// AUC and log loss of `model` on `samples`.
pub fn evaluate(model: &dyn CtrModel<f64>, samples: &[Sample], mode: AucMode) -> Result<(f64, f64)> {
    let probs = model.predict_batch(samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    Ok((auc(&probs, &labels, mode)?, logloss(&probs, &labels)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CentralConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub auc_mode: AucMode,
    pub seed: u64,
}

impl Default for CentralConfig {
    fn default() -> Self {
        CentralConfig {
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 256,
            epochs: 3,
            auc_mode: AucMode::Thresholded10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_logloss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtrReport {
    pub model: ModelKind,
    pub auc: f64,
    pub logloss: f64,
    /// Epoch whose weights were evaluated, chosen by validation log loss.
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub group_sizes: BTreeMap<String, usize>,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Trains on `data.train` one epoch at a time, keeps the weights with the
/// lowest validation log loss and reports test metrics for them.
pub fn train_centralized(data: &CtrData, cfg: &CentralConfig) -> Result<(Box<dyn CtrModel<f64>>, CtrReport)> {
    if data.val.is_empty() || data.test.is_empty() {
        return Err(invalid!("validation and test splits must be non-empty"));
    }
    let mut model = build_model::<f64>(&cfg.model, &data.encoder.schema, cfg.seed)?;
    info!("{} parameter groups: {:?}", cfg.model.kind.name(), group_sizes(model.params()));
    let mut optimizer = cfg.optimizer.build::<f64>();
    let mut best = (0, f64::INFINITY, model.params().clone());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let trace = train_epochs(model.as_mut(), &data.train, &mut optimizer, cfg.batch_size, 1, cfg.seed.wrapping_add(epoch as u64))?;
        let (val_auc, val_logloss) = evaluate(model.as_ref(), &data.val, cfg.auc_mode)?;
        info!("epoch {epoch}: train loss {:.4}, val AUC {val_auc:.4}, val logloss {val_logloss:.4}", trace[0]);
        epochs.push(EpochRecord {
            epoch,
            train_loss: trace[0],
            val_auc,
            val_logloss,
        });
        if val_logloss < best.1 {
            best = (epoch, val_logloss, model.params().clone());
        }
    }
    model.params_mut().load_groups(&best.2)?;
    let (auc, logloss) = evaluate(model.as_ref(), &data.test, cfg.auc_mode)?;
    let report = CtrReport {
        model: cfg.model.kind,
        auc,
        logloss,
        best_epoch: best.0,
        epochs,
        group_sizes: group_sizes(model.params()),
        train_samples: data.train.len(),
        test_samples: data.test.len(),
    };
    Ok((model, report))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartitionScheme {
    #[default]
    Iid,
    Cluster(ClusterConfig),
}

impl PartitionScheme {
    pub fn name(&self) -> &'static str {
        match self {
            PartitionScheme::Iid => "iid",
            PartitionScheme::Cluster(_) => "cluster",
        }
    }

    pub fn partition(&self, data: &CtrData, clients: usize, seed: u64) -> Result<Vec<ClientPartition>> {
        match self {
            PartitionScheme::Iid => partition_iid(&data.train, &data.test, clients, seed),
            PartitionScheme::Cluster(c) => partition_cluster(&data.train, &data.test, &ClusterConfig { clients, ..*c }, seed),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederatedConfig {
    pub model: ModelConfig,
    pub rounds: RoundConfig,
    pub partition: PartitionScheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedReport {
    pub model: ModelKind,
    pub partition: String,
    pub plan: Vec<String>,
    /// Final-round federated AUC and log loss.
    pub auc: f64,
    pub logloss: f64,
    pub pooled_auc: f64,
    pub client_train_sizes: Vec<usize>,
    pub client_test_sizes: Vec<usize>,
    pub group_sizes: BTreeMap<String, usize>,
    pub plan_params: usize,
    pub history: RoundHistory,
}

pub fn train_federated(data: &CtrData, cfg: &FederatedConfig, store_dir: Option<PathBuf>) -> Result<FederatedReport> {
    cfg.rounds.validate()?;
    let parts = cfg.partition.partition(data, cfg.rounds.num_clients, cfg.rounds.seed)?;
    info!(
        "{} partition: train sizes {:?}",
        cfg.partition.name(),
        parts.iter().map(ClientPartition::n_k).collect::<Vec<_>>()
    );
    let initial = build_model::<f64>(&cfg.model, &data.encoder.schema, cfg.rounds.seed)?;
    let outcome = run_rounds(&cfg.rounds, &parts, initial.as_ref(), store_dir)?;
    let last = outcome.history.last();
    Ok(FederatedReport {
        model: cfg.model.kind,
        partition: cfg.partition.name().to_string(),
        plan: cfg.rounds.plan.clone(),
        auc: last.map_or(f64::NAN, |r| r.auc),
        logloss: last.map_or(f64::NAN, |r| r.logloss),
        pooled_auc: last.map_or(f64::NAN, |r| r.pooled_auc),
        client_train_sizes: parts.iter().map(|p| p.train.len()).collect(),
        client_test_sizes: parts.iter().map(|p| p.test.len()).collect(),
        group_sizes: group_sizes(initial.params()),
        plan_params: plan_param_count(initial.params(), &cfg.rounds.plan_refs()),
        history: outcome.history,
    })
}
