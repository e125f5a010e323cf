//! Click-through-rate rankers: logistic regression and AutoInt.

pub mod autoint;
pub mod embedding;
pub mod lr;
pub mod model;
pub mod train;

pub use autoint::AutoInt;
pub use embedding::{embed_sample, EmbeddingLayer};
pub use lr::{LrEmb, LrRaw};
pub use model::{build_model, logit_bce, BatchObjective, CtrModel, ModelConfig, ModelKind};
pub use train::{train_epochs, ModelCheckpoint};
