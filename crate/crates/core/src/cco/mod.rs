//! Correlated cross-occurrence candidate generation.

pub mod llr;
pub mod matrix;
pub mod recommend;
pub mod similarity;

pub use llr::llr;
pub use matrix::{build_interaction_matrix, SparseInteractionMatrix};
pub use recommend::{pop_rec, popularity, score_user, CcoModel, CcoParams, InvertedIndex, Query, RecommendationList};
pub use similarity::{cross_occurrence, cross_occurrence_reference, Correlated, SimilarityMatrix};
