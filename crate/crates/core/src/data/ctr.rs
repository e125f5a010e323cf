//! CTR samples derived from ratings: binarised labels and typed feature fields.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::movielens::Dataset;
use crate::error::{invalid, Error, Result};

/// Reserved vocabulary entry at index 0 for values unseen during fitting.
pub const OOV: &str = "<oov>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Numeric,
    Categorical,
    MultiValued,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Empty for numeric fields; `vocab[0] == OOV` otherwise.
    pub vocab: Vec<String>,
}

impl FieldSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FieldSpec {
            name: name.into(),
            kind: FieldKind::Numeric,
            vocab: Vec::new(),
        }
    }

    /// Builds a vocabulary from `values`, sorted, with the OOV entry first.
    pub fn with_values<I, S>(name: impl Into<String>, kind: FieldKind, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let distinct: BTreeSet<String> = values.into_iter().map(Into::into).filter(|v| v != OOV).collect();
        let mut vocab = Vec::with_capacity(distinct.len() + 1);
        vocab.push(OOV.to_string());
        vocab.extend(distinct);
        FieldSpec {
            name: name.into(),
            kind,
            vocab,
        }
    }

    /// Rows of the embedding table (1 for numeric fields).
    pub fn cardinality(&self) -> usize {
        match self.kind {
            FieldKind::Numeric => 1,
            _ => self.vocab.len(),
        }
    }
}

/// Ordered field list with per-field vocabulary lookup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldSpec>", into = "Vec<FieldSpec>")]
pub struct FeatureSchema {
    fields: Vec<FieldSpec>,
    lookup: Vec<HashMap<String, usize>>,
}

impl TryFrom<Vec<FieldSpec>> for FeatureSchema {
    type Error = Error;
    fn try_from(fields: Vec<FieldSpec>) -> Result<Self> {
        FeatureSchema::new(fields)
    }
}

impl From<FeatureSchema> for Vec<FieldSpec> {
    fn from(s: FeatureSchema) -> Self {
        s.fields
    }
}

impl FeatureSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(invalid!("duplicate field name `{}`", f.name));
            }
            match f.kind {
                FieldKind::Numeric if !f.vocab.is_empty() => {
                    return Err(invalid!("numeric field `{}` has a vocabulary", f.name));
                }
                FieldKind::Categorical | FieldKind::MultiValued if f.vocab.first().map(String::as_str) != Some(OOV) => {
                    return Err(invalid!("field `{}` vocabulary must start with {OOV}", f.name));
                }
                _ => {}
            }
        }
        let lookup = fields
            .iter()
            .map(|f| f.vocab.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect())
            .collect();
        Ok(FeatureSchema { fields, lookup })
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Vocabulary index of `value` in field `field`, or 0 (OOV).
    pub fn index_of(&self, field: usize, value: &str) -> usize {
        self.lookup[field].get(value).copied().unwrap_or(0)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Checks value kinds and index bounds of a sample.
    pub fn validate(&self, sample: &Sample) -> Result<()> {
        if sample.values.len() != self.fields.len() {
            return Err(Error::SchemaMismatch(format!(
                "sample has {} values for {} fields",
                sample.values.len(),
                self.fields.len()
            )));
        }
        for (f, v) in self.fields.iter().zip(&sample.values) {
            let ok = match (f.kind, v) {
                (FieldKind::Numeric, FieldValue::Numeric(x)) => x.is_finite(),
                (FieldKind::Categorical, FieldValue::Categorical(i)) => *i < f.vocab.len(),
                (FieldKind::MultiValued, FieldValue::Multi(ix)) => {
                    !ix.is_empty() && ix.iter().all(|i| *i < f.vocab.len())
                }
                _ => false,
            };
            if !ok {
                return Err(Error::SchemaMismatch(format!("bad value {v:?} for field `{}`", f.name)));
            }
        }
        Ok(())
    }

    /// Field order, kinds and vocabulary hashes; used to reject checkpoints
    /// trained against a different encoding.
    pub fn descriptor(&self) -> SchemaDescriptor {
        SchemaDescriptor {
            fields: self
                .fields
                .iter()
                .map(|f| {
                    let mut h = Sha256::new();
                    for v in &f.vocab {
                        h.update(v.as_bytes());
                        h.update([0u8]);
                    }
                    FieldDescriptor {
                        name: f.name.clone(),
                        kind: f.kind,
                        vocab_size: f.vocab.len(),
                        vocab_hash: hex::encode(&h.finalize()[..]),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub kind: FieldKind,
    pub vocab_size: usize,
    pub vocab_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub fields: Vec<FieldDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldValue {
    Numeric(f64),
    Categorical(usize),
    /// Distinct, sorted vocabulary indices.
    Multi(Vec<usize>),
}

/// One encoded training example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<FieldValue>,
    /// 0 or 1.
    pub label: u8,
    pub user: u32,
    pub item: u32,
}

/// A binarised rating before vocabulary encoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtrRecord {
    pub user_id: u32,
    pub movie_id: u32,
    pub genres: Vec<String>,
    pub gender: String,
    pub age: u8,
    pub occupation: u8,
    /// First three characters of the zip code.
    pub zip3: String,
    pub timestamp: u64,
    pub label: u8,
}

/// Ratings above 3 become positives, below 3 negatives; ratings of 3 are
/// discarded.
pub fn binarize_ratings(ds: &Dataset) -> Vec<CtrRecord> {
    ds.ratings
        .iter()
        .filter(|r| r.rating != 3)
        .filter_map(|r| {
            let user = ds.users.get(&r.user_id)?;
            let movie = ds.movies.get(&r.movie_id)?;
            Some(CtrRecord {
                user_id: r.user_id,
                movie_id: r.movie_id,
                genres: movie.genres.iter().cloned().collect(),
                gender: user.gender.clone(),
                age: user.age,
                occupation: user.occupation,
                zip3: user.zip_code.chars().take(3).collect(),
                timestamp: r.timestamp,
                label: u8::from(r.rating > 3),
            })
        })
        .collect()
}

pub const FIELD_USER: &str = "user_id";
pub const FIELD_MOVIE: &str = "movie_id";
pub const FIELD_GENRES: &str = "genres";
pub const FIELD_GENDER: &str = "gender";
pub const FIELD_AGE: &str = "bucketed_age";
pub const FIELD_OCCUPATION: &str = "occupation";
pub const FIELD_ZIP: &str = "zip_code";
pub const FIELD_TIMESTAMP: &str = "timestamp";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderOptions {
    /// Adds the min-max normalised timestamp as a numeric field.
    pub include_timestamp: bool,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions {
            include_timestamp: true,
        }
    }
}

/// Vocabularies and normalisation statistics fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtrEncoder {
    pub schema: FeatureSchema,
    pub timestamp_min: u64,
    pub timestamp_max: u64,
    pub options: EncoderOptions,
}

impl CtrEncoder {
    pub fn fit(train: &[CtrRecord], options: EncoderOptions) -> Result<Self> {
        if train.is_empty() {
            return Err(invalid!("cannot fit an encoder on zero records"));
        }
        let cat = FieldKind::Categorical;
        let mut fields = vec![
            FieldSpec::with_values(FIELD_USER, cat, train.iter().map(|r| r.user_id.to_string())),
            FieldSpec::with_values(FIELD_MOVIE, cat, train.iter().map(|r| r.movie_id.to_string())),
            FieldSpec::with_values(FIELD_GENRES, FieldKind::MultiValued, train.iter().flat_map(|r| r.genres.iter().cloned())),
            FieldSpec::with_values(FIELD_GENDER, cat, train.iter().map(|r| r.gender.clone())),
            FieldSpec::with_values(FIELD_AGE, cat, train.iter().map(|r| r.age.to_string())),
            FieldSpec::with_values(FIELD_OCCUPATION, cat, train.iter().map(|r| r.occupation.to_string())),
            FieldSpec::with_values(FIELD_ZIP, cat, train.iter().map(|r| r.zip3.clone())),
        ];
        if options.include_timestamp {
            fields.push(FieldSpec::numeric(FIELD_TIMESTAMP));
        }
        let (lo, hi) = train
            .iter()
            .fold((u64::MAX, u64::MIN), |(lo, hi), r| (lo.min(r.timestamp), hi.max(r.timestamp)));
        Ok(CtrEncoder {
            schema: FeatureSchema::new(fields)?,
            timestamp_min: lo,
            timestamp_max: hi,
            options,
        })
    }

    pub fn normalize_timestamp(&self, ts: u64) -> f64 {
        if self.timestamp_max == self.timestamp_min {
            return 0.0;
        }
        (ts as f64 - self.timestamp_min as f64) / (self.timestamp_max - self.timestamp_min) as f64
    }

    pub fn encode(&self, r: &CtrRecord) -> Sample {
        let s = &self.schema;
        let mut genres: Vec<usize> = r.genres.iter().map(|g| s.index_of(2, g)).collect();
        genres.sort_unstable();
        genres.dedup();
        if genres.is_empty() {
            genres.push(0);
        }
        let mut values = vec![
            FieldValue::Categorical(s.index_of(0, &r.user_id.to_string())),
            FieldValue::Categorical(s.index_of(1, &r.movie_id.to_string())),
            FieldValue::Multi(genres),
            FieldValue::Categorical(s.index_of(3, &r.gender)),
            FieldValue::Categorical(s.index_of(4, &r.age.to_string())),
            FieldValue::Categorical(s.index_of(5, &r.occupation.to_string())),
            FieldValue::Categorical(s.index_of(6, &r.zip3)),
        ];
        if self.options.include_timestamp {
            values.push(FieldValue::Numeric(self.normalize_timestamp(r.timestamp)));
        }
        Sample {
            values,
            label: r.label,
            user: r.user_id,
            item: r.movie_id,
        }
    }

    pub fn encode_all(&self, records: &[CtrRecord]) -> Vec<Sample> {
        records.iter().map(|r| self.encode(r)).collect()
    }
}
