//! Simulated FedAvg rounds over client partitions.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctr::model::CtrModel;
use crate::error::{invalid, Error, Result};
use crate::federation::fedavg::{fedavg_aggregate, local_update, zero_sum_noise, LocalConfig};
use crate::federation::partition::{ClientPartition, DEFAULT_CLIENTS};
use crate::metrics::classification::{auc, federated_metric, logloss, AucMode};
use crate::nn::optim::OptimizerConfig;
use crate::nn::params::{ParameterSet, GROUP_NAMES};
use crate::scalar::Scalar;

/// Bytes per transmitted parameter.
pub const BYTES_PER_PARAM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundConfig {
    pub num_clients: usize,
    pub client_fraction: f64,
    pub local_epochs: usize,
    pub local_batch: usize,
    pub rounds: usize,
    /// Parameter groups averaged by the server; the rest stay on clients.
    pub plan: Vec<String>,
    pub noise_sigma: f64,
    pub optimizer: OptimizerConfig,
    pub auc_mode: AucMode,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            num_clients: DEFAULT_CLIENTS,
            client_fraction: 1.0,
            local_epochs: 1,
            local_batch: 256,
            rounds: 20,
            plan: GROUP_NAMES.iter().map(|g| g.to_string()).collect(),
            noise_sigma: 0.0,
            optimizer: OptimizerConfig::default(),
            auc_mode: AucMode::Exact,
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(invalid!("num_clients must be positive"));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(invalid!("client_fraction {} outside (0, 1]", self.client_fraction));
        }
        if self.local_batch == 0 {
            return Err(invalid!("local_batch must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid!("noise_sigma {} must be finite and non-negative", self.noise_sigma));
        }
        for (i, g) in self.plan.iter().enumerate() {
            if !GROUP_NAMES.contains(&g.as_str()) {
                return Err(invalid!("unknown parameter group `{g}` in plan; expected one of {GROUP_NAMES:?}"));
            }
            if self.plan[..i].contains(g) {
                return Err(invalid!("group `{g}` listed twice in plan"));
            }
        }
        Ok(())
    }

    pub fn plan_refs(&self) -> Vec<&str> {
        self.plan.iter().map(String::as_str).collect()
    }

    fn local(&self) -> LocalConfig {
        LocalConfig {
            epochs: self.local_epochs,
            batch_size: self.local_batch,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    /// Test-size-weighted mean of per-client AUC.
    pub auc: f64,
    /// Test-size-weighted mean of per-client log loss.
    pub logloss: f64,
    /// AUC over the pooled predictions of every client.
    pub pooled_auc: f64,
    pub participants: Vec<usize>,
    /// Training-set sizes of the participants.
    pub client_sizes: Vec<usize>,
    pub wall_secs: f64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundHistory {
    pub rounds: Vec<RoundRecord>,
}

#[derive(Serialize)]
struct CsvRow {
    round: usize,
    auc: f64,
    logloss: f64,
    bytes: u64,
}

impl RoundHistory {
    pub fn last(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for r in &self.rounds {
            w.serialize(CsvRow {
                round: r.round,
                auc: r.auc,
                logloss: r.logloss,
                bytes: r.bytes,
            })
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Client-local parameters kept between rounds, optionally dumped to disk
/// as one JSON file per client.
#[derive(Clone, Debug)]
pub struct ClientStore<T> {
    states: Vec<ParameterSet<T>>,
    dir: Option<PathBuf>,
}

impl<T: Scalar> ClientStore<T> {
    pub fn new(initial: &ParameterSet<T>, clients: usize, dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(ClientStore {
            states: vec![initial.clone(); clients],
            dir,
        })
    }

    pub fn get(&self, client: usize) -> &ParameterSet<T> {
        &self.states[client]
    }

    pub fn path(&self, client: usize) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("client_{client}.json")))
    }

    /// Stores the client's parameters and dumps the groups outside `plan`.
    pub fn put(&mut self, client: usize, params: ParameterSet<T>, plan: &[&str]) -> Result<()> {
        if let Some(path) = self.path(client) {
            let local: Vec<&str> = params.group_names().into_iter().filter(|g| !plan.contains(g)).collect();
            fs::write(&path, params.subset(&local).to_json_bytes()?).map_err(|e| Error::io(&path, e))?;
        }
        self.states[client] = params;
        Ok(())
    }

    /// Reads a dumped client state back.
    pub fn load_dump(&self, client: usize) -> Result<ParameterSet<T>> {
        let path = self.path(client).ok_or_else(|| invalid!("client store has no directory"))?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        ParameterSet::from_json_bytes(&bytes)
    }
}

#[derive(Clone, Debug)]
pub struct FederatedOutcome<T> {
    pub history: RoundHistory,
    /// Latest server copy of the plan groups.
    pub global: ParameterSet<T>,
    pub store: ClientStore<T>,
}

fn derive_seed(seed: u64, round: usize, client: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((round as u64) << 32) | client as u64);
    rng.next_u64()
}

/// Parameter count of the groups in `plan`.
pub fn plan_param_count<T: Scalar>(params: &ParameterSet<T>, plan: &[&str]) -> usize {
    params.subset(plan).num_scalars()
}

struct ClientEval {
    size: usize,
    auc: Option<f64>,
    logloss: f64,
    scores: Vec<f64>,
    labels: Vec<u8>,
}

fn evaluate_client<T: Scalar>(model: &mut dyn CtrModel<T>, state: &ParameterSet<T>, global: &ParameterSet<T>, part: &ClientPartition, mode: AucMode) -> Result<Option<ClientEval>> {
    if part.test.is_empty() {
        return Ok(None);
    }
    model.params_mut().load_groups(state)?;
    model.params_mut().load_groups(global)?;
    let scores: Vec<f64> = model.predict_batch(&part.test)?.into_iter().map(Scalar::as_f64).collect();
    let labels: Vec<u8> = part.test.iter().map(|s| s.label).collect();
    let client_auc = match auc(&scores, &labels, mode) {
        Ok(a) => Some(a),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Some(ClientEval {
        size: part.test.len(),
        auc: client_auc,
        logloss: logloss(&scores, &labels)?,
        scores,
        labels,
    }))
}

/// Runs `cfg.rounds` rounds of client sampling, broadcast, local training,
/// optional zero-sum noise, aggregation and federated evaluation.
///
/// Every client starts from `initial`. Groups outside the plan persist per
/// client in the store. Clients train concurrently; results do not depend
/// on the thread count.
pub fn run_rounds<T: Scalar>(
    cfg: &RoundConfig,
    partitions: &[ClientPartition],
    initial: &dyn CtrModel<T>,
    store_dir: Option<PathBuf>,
) -> Result<FederatedOutcome<T>> {
    cfg.validate()?;
    if partitions.is_empty() {
        return Err(invalid!("no client partitions"));
    }
    let plan = cfg.plan_refs();
    let mut store = ClientStore::new(initial.params(), partitions.len(), store_dir)?;
    let mut global = initial.params().subset(&plan);
    let per_client_params = plan_param_count(initial.params(), &plan);
    let mut history = RoundHistory::default();
    let empty: Vec<usize> = partitions.iter().filter(|p| p.train.is_empty()).map(|p| p.client_id).collect();
    if !empty.is_empty() {
        warn!("clients {empty:?} have no training samples and are skipped");
    }
    let per_round = ((cfg.client_fraction * partitions.len() as f64).round() as usize).clamp(1, partitions.len());

    for round in 1..=cfg.rounds {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, round, usize::MAX >> 32));
        let mut chosen: Vec<usize> = if per_round == partitions.len() {
            (0..partitions.len()).collect()
        } else {
            index::sample(&mut rng, partitions.len(), per_round).into_vec()
        };
        chosen.sort_unstable();
        chosen.retain(|&c| !partitions[c].train.is_empty());
        if chosen.is_empty() {
            return Err(invalid!("round {round}: no sampled client has training data"));
        }

        let local_cfg = cfg.local();
        let updates: Vec<ParameterSet<T>> = chosen
            .par_iter()
            .map(|&c| {
                let mut model = initial.clone_box();
                local_update(model.as_mut(), store.get(c), &global, &partitions[c].train, &local_cfg, derive_seed(cfg.seed, round, c))
            })
            .collect::<Result<_>>()?;
        let sizes: Vec<usize> = chosen.iter().map(|&c| partitions[c].n_k()).collect();
        let mut sent = updates;
        zero_sum_noise(&mut sent, &sizes, &plan, cfg.noise_sigma, derive_seed(cfg.seed, round, usize::MAX >> 33))?;
        global = fedavg_aggregate(&sent, &sizes, &plan)?;
        for (&c, params) in chosen.iter().zip(sent) {
            store.put(c, params, &plan)?;
        }

        let evals: Vec<Option<ClientEval>> = (0..partitions.len())
            .into_par_iter()
            .map(|c| {
                let mut model = initial.clone_box();
                evaluate_client(model.as_mut(), store.get(c), &global, &partitions[c], cfg.auc_mode)
            })
            .collect::<Result<_>>()?;
        let evals: Vec<ClientEval> = evals.into_iter().flatten().collect();
        if evals.is_empty() {
            return Err(invalid!("no client has test samples"));
        }
        let (auc_vals, auc_sizes): (Vec<f64>, Vec<usize>) = evals.iter().filter_map(|e| e.auc.map(|a| (a, e.size))).unzip();
        let fed_auc = if auc_vals.is_empty() { f64::NAN } else { federated_metric(&auc_vals, &auc_sizes)? };
        let fed_logloss = federated_metric(&evals.iter().map(|e| e.logloss).collect::<Vec<_>>(), &evals.iter().map(|e| e.size).collect::<Vec<_>>())?;
        let pooled_scores: Vec<f64> = evals.iter().flat_map(|e| e.scores.iter().copied()).collect();
        let pooled_labels: Vec<u8> = evals.iter().flat_map(|e| e.labels.iter().copied()).collect();
        let pooled_auc = auc(&pooled_scores, &pooled_labels, cfg.auc_mode).unwrap_or(f64::NAN);

        history.rounds.push(RoundRecord {
            round,
            auc: fed_auc,
            logloss: fed_logloss,
            pooled_auc,
            participants: chosen.iter().map(|&c| partitions[c].client_id).collect(),
            client_sizes: sizes,
            wall_secs: started.elapsed().as_secs_f64(),
            bytes: (2 * chosen.len() * per_client_params * BYTES_PER_PARAM) as u64,
        });
    }
    Ok(FederatedOutcome { history, global, store })
}
