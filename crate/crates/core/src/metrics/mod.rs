//! Classification and ranking metrics.

pub mod classification;
pub mod ranking;

pub use classification::{auc, federated_metric, logloss, AucMode};
pub use ranking::{hit_rate_at_k, loo_ranking_eval, ndcg_at_k, ndcg_of_rank, rank_of, LooCase, LooConfig, LooReport};
