//! Splitting a centralized train/test split across simulated clients.

use std::collections::{BTreeMap, HashMap};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cco::matrix::SparseInteractionMatrix;
use crate::data::ctr::Sample;
use crate::error::{invalid, Result};
use crate::federation::kmeans::{kmeans, DEFAULT_MAX_ITERS};
use crate::federation::svd::{truncated_svd, DEFAULT_OVERSAMPLE, DEFAULT_RANK, MIN_POWER_ITERS};
use crate::nn::tensor::Tensor;

pub const DEFAULT_CLIENTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub client_id: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl ClientPartition {
    /// Training-set size, the client's aggregation weight.
    pub fn n_k(&self) -> usize {
        self.train.len()
    }
}

fn even_chunks(mut items: Vec<Sample>, k: usize) -> Vec<Vec<Sample>> {
    let n = items.len();
    let mut out = Vec::with_capacity(k);
    for c in (0..k).rev() {
        let take = n * (c + 1) / k - n * c / k;
        let rest = items.split_off(items.len() - take);
        out.push(rest);
    }
    out.reverse();
    out
}

/// Uniformly shuffled, near-equal (±1) splits of both sets.
pub fn partition_iid(train: &[Sample], test: &[Sample], k: usize, seed: u64) -> Result<Vec<ClientPartition>> {
    if k == 0 {
        return Err(invalid!("number of clients must be positive"));
    }
    if train.len() < k {
        return Err(invalid!("{} training samples cannot fill {k} clients", train.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr = train.to_vec();
    tr.shuffle(&mut rng);
    let mut te = test.to_vec();
    te.shuffle(&mut rng);
    Ok(even_chunks(tr, k)
        .into_iter()
        .zip(even_chunks(te, k))
        .enumerate()
        .map(|(client_id, (train, test))| ClientPartition { client_id, train, test })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub clients: usize,
    pub rank: usize,
    pub power_iters: usize,
    pub kmeans_iters: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            clients: DEFAULT_CLIENTS,
            rank: DEFAULT_RANK,
            power_iters: MIN_POWER_ITERS + 2,
            kmeans_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// Rank-`rank` SVD embedding of every user in the user × item matrix of
/// `train`, keyed by user id.
pub fn user_embeddings(train: &[Sample], rank: usize, power_iters: usize, seed: u64) -> Result<(Vec<u32>, Tensor<f64>)> {
    let pairs: Vec<(String, String)> = train.iter().map(|s| (s.user.to_string(), s.item.to_string())).collect();
    let matrix = SparseInteractionMatrix::from_pairs(pairs.iter().map(|(u, i)| (u.as_str(), i.as_str())));
    let svd = truncated_svd::<f64, _>(&matrix, rank, DEFAULT_OVERSAMPLE, power_iters, seed)?;
    let users = matrix
        .row_ids()
        .iter()
        .map(|u| u.parse::<u32>().map_err(|_| invalid!("bad user id `{u}`")))
        .collect::<Result<Vec<_>>>()?;
    Ok((users, svd.row_embeddings()))
}

/// Non-IID split: users are clustered on their SVD embeddings and every
/// sample goes to the client of its user's cluster.
///
/// Users seen only in `test` fall in the cluster nearest the origin.
/// Clients left with no samples at all are dropped; the rest are numbered
/// consecutively.
pub fn partition_cluster(train: &[Sample], test: &[Sample], cfg: &ClusterConfig, seed: u64) -> Result<Vec<ClientPartition>> {
    if cfg.clients == 0 {
        return Err(invalid!("number of clients must be positive"));
    }
    if train.is_empty() {
        return Err(invalid!("cannot cluster an empty training set"));
    }
    let (users, emb) = user_embeddings(train, cfg.rank, cfg.power_iters, seed)?;
    let km = kmeans(&emb, cfg.clients, cfg.kmeans_iters, seed)?;
    let cluster_of: HashMap<u32, usize> = users.iter().copied().zip(km.assignments.iter().copied()).collect();
    let origin = (0..km.centroids.rows())
        .min_by(|&a, &b| {
            let na: f64 = km.centroids.row(a).iter().map(|x| x * x).sum();
            let nb: f64 = km.centroids.row(b).iter().map(|x| x * x).sum();
            na.partial_cmp(&nb).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);

    let mut buckets: BTreeMap<usize, (Vec<Sample>, Vec<Sample>)> = (0..cfg.clients).map(|c| (c, Default::default())).collect();
    for s in train {
        buckets.get_mut(&cluster_of[&s.user]).expect("cluster").0.push(s.clone());
    }
    let mut unseen = 0usize;
    for s in test {
        let c = cluster_of.get(&s.user).copied().unwrap_or_else(|| {
            unseen += 1;
            origin
        });
        buckets.get_mut(&c).expect("cluster").1.push(s.clone());
    }
    if unseen > 0 {
        info!("{unseen} test samples belong to users without training data");
    }
    let mut out = Vec::new();
    for (cluster, (train, test)) in buckets {
        if train.is_empty() && test.is_empty() {
            warn!("cluster {cluster} received no users; dropping its client");
            continue;
        }
        out.push(ClientPartition {
            client_id: out.len(),
            train,
            test,
        });
    }
    Ok(out)
}
