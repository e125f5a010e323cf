//! Simulated federated training: client partitioning, FedAvg aggregation
//! with selective parameter groups, and zero-sum masking noise.

pub mod fedavg;
pub mod kmeans;
pub mod partition;
pub mod rounds;
pub mod svd;

pub use fedavg::{fedavg_aggregate, local_update, zero_sum_noise, LocalConfig};
pub use kmeans::{kmeans, KMeans};
pub use partition::{partition_cluster, partition_iid, user_embeddings, ClientPartition, ClusterConfig};
pub use rounds::{plan_param_count, run_rounds, ClientStore, FederatedOutcome, RoundConfig, RoundHistory, RoundRecord};
pub use svd::{truncated_svd, LinearOperator, TruncatedSvd};
