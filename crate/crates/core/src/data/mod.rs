//! Dataset ingestion, CTR sample derivation, event logs and splits.

pub mod ctr;
pub mod events;
pub mod movielens;
pub mod split;
pub mod synthetic;

pub use ctr::{
    binarize_ratings, CtrEncoder, CtrRecord, EncoderOptions, FeatureSchema, FieldKind, FieldSpec, FieldValue,
    Sample, SchemaDescriptor, OOV,
};
pub use events::{build_event_log, EventLog, EventRecord, IndicatorSelection};
pub use movielens::{parse_movielens, parse_movielens_dir, Dataset, Movie, ParseReport, RatingRecord, UserProfile};
pub use split::{split_leave_one_out, split_train_val_test, stratified_subsample};
