//! End-to-end experiment pipelines shared by the command line runner and
//! the acceptance suite.

pub mod ctr;
pub mod ranking;

pub use ctr::{
    evaluate, group_sizes, train_centralized, train_federated, CentralConfig, CtrData, CtrReport, EpochRecord,
    FederatedConfig, FederatedReport, PartitionScheme,
};
pub use ranking::{run_ranking, LooSetup, Ranker, RankingConfig};
