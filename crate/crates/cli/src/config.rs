//! Experiment configuration files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use fedrec_core::ctr::model::ModelKind;
use fedrec_core::data::ctr::EncoderOptions;
use fedrec_core::data::movielens::{parse_movielens_dir, Dataset};
use fedrec_core::data::synthetic::{generate, SyntheticConfig};
use fedrec_core::experiments::{CentralConfig, FederatedConfig, Ranker, RankingConfig};
use fedrec_core::features::SessionConfig;
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DATA_DIR_ENV: &str = "FEDREC_ML1M_DIR";

/// A configuration problem; reported with exit code 2 before any output is
/// written.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

macro_rules! invalid {
    ($($arg:tt)*) => {
        anyhow::Error::new($crate::config::Invalid(format!($($arg)*)))
    };
}
pub(crate) use invalid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Cco,
    CtrCentral,
    CtrFederated,
    Features,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Cco => "cco",
            Stage::CtrCentral => "ctr-central",
            Stage::CtrFederated => "ctr-federated",
            Stage::Features => "features",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    #[serde(rename = "poprec")]
    PopRec,
    Cco,
    LrRaw,
    LrEmb,
    #[serde(rename = "autoint")]
    AutoInt,
}

impl ModelName {
    pub fn name(&self) -> &'static str {
        match self {
            ModelName::PopRec => "poprec",
            ModelName::Cco => "cco",
            ModelName::LrRaw => "lr-raw",
            ModelName::LrEmb => "lr-emb",
            ModelName::AutoInt => "autoint",
        }
    }

    fn ranker(&self) -> Option<Ranker> {
        match self {
            ModelName::PopRec => Some(Ranker::PopRec),
            ModelName::Cco => Some(Ranker::Cco),
            _ => None,
        }
    }

    fn ctr_kind(&self) -> Option<ModelKind> {
        match self {
            ModelName::LrRaw => Some(ModelKind::LrRaw),
            ModelName::LrEmb => Some(ModelKind::LrEmb),
            ModelName::AutoInt => Some(ModelKind::AutoInt),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    /// MovieLens 1M `.dat` files; `dir` falls back to the data directory
    /// flag or environment variable.
    Movielens {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
    },
    Synthetic(SyntheticConfig),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtrStage {
    #[serde(flatten)]
    pub train: CentralConfig,
    pub encoder: EncoderOptions,
    /// Label-stratified fraction of the binarised ratings to use.
    pub subsample: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederatedStage {
    #[serde(flatten)]
    pub train: FederatedConfig,
    pub encoder: EncoderOptions,
    pub subsample: Option<f64>,
    /// Writes each client's local parameters to `clients/` after training.
    pub dump_clients: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturesStage {
    pub input: PathBuf,
    #[serde(default)]
    pub session: SessionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctr: Option<CtrStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub federated: Option<FederatedStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeaturesStage>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn check_fraction(f: Option<f64>) -> anyhow::Result<()> {
    match f {
        Some(x) if !(x > 0.0 && x <= 1.0) => Err(invalid!("subsample {x} outside (0, 1]")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| invalid!("config {}: {e}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn features_input(&self) -> Option<PathBuf> {
        self.features.as_ref().map(|f| self.resolve_path(&f.input))
    }

    /// Applies the seed override, fills in the stage blocks and model kinds,
    /// and checks every constraint.
    pub fn resolve(mut self, seed: Option<u64>) -> anyhow::Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(invalid!("name `{}` must be non-empty and use only [A-Za-z0-9_-]", self.name));
        }
        if self.repeats == 0 {
            return Err(invalid!("repeats must be positive"));
        }
        let model = self.model;
        let compatible = match self.stage {
            Stage::Cco => model.and_then(|m| m.ranker()).is_some(),
            Stage::CtrCentral | Stage::CtrFederated => model.and_then(|m| m.ctr_kind()).is_some(),
            Stage::Features => model.is_none(),
        };
        if !compatible {
            let m = model.map_or("none", |m| m.name());
            return Err(invalid!("model `{m}` is not valid for stage `{}`", self.stage.name()));
        }
        let blocks = [
            ("ranking", self.ranking.is_some(), Stage::Cco),
            ("ctr", self.ctr.is_some(), Stage::CtrCentral),
            ("federated", self.federated.is_some(), Stage::CtrFederated),
            ("features", self.features.is_some(), Stage::Features),
        ];
        for (block, present, stage) in blocks {
            if present && stage != self.stage {
                return Err(invalid!("`{block}` block does not apply to stage `{}`", self.stage.name()));
            }
        }
        match (self.stage, &self.dataset) {
            (Stage::Features, Some(_)) => return Err(invalid!("stage `features` reads `features.input`, not `dataset`")),
            (Stage::Features, None) => {}
            (_, None) => return Err(invalid!("stage `{}` needs a `dataset`", self.stage.name())),
            (_, Some(_)) => {}
        }
        let seed = self.seed;
        match self.stage {
            Stage::Cco => {
                let r = self.ranking.get_or_insert_with(RankingConfig::default);
                r.ranker = model.and_then(|m| m.ranker()).unwrap();
                r.eval.seed = seed;
                if r.eval.k == 0 || r.eval.negatives == Some(0) {
                    return Err(invalid!("ranking needs k > 0 and a positive negative count"));
                }
            }
            Stage::CtrCentral => {
                let c = self.ctr.get_or_insert_with(CtrStage::default);
                c.train.model.kind = model.and_then(|m| m.ctr_kind()).unwrap();
                c.train.seed = seed;
                c.train.model.validate().map_err(|e| invalid!("{e}"))?;
                if c.train.batch_size == 0 || c.train.epochs == 0 {
                    return Err(invalid!("batch_size and epochs must be positive"));
                }
                check_fraction(c.subsample)?;
            }
            Stage::CtrFederated => {
                let f = self.federated.get_or_insert_with(FederatedStage::default);
                f.train.model.kind = model.and_then(|m| m.ctr_kind()).unwrap();
                f.train.rounds.seed = seed;
                f.train.model.validate().map_err(|e| invalid!("{e}"))?;
                f.train.rounds.validate().map_err(|e| invalid!("{e}"))?;
                check_fraction(f.subsample)?;
            }
            Stage::Features => {
                if self.features.is_none() {
                    return Err(invalid!("stage `features` needs a `features` block with an `input` path"));
                }
            }
        }
        Ok(self)
    }

    /// Hex SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(&Sha256::digest(&bytes)[..])
    }

    pub fn run_dir(&self, out: &Path) -> PathBuf {
        out.join(format!("{}-{}", self.name, &self.hash()[..12]))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Resolves the dataset location without reading it.
    pub fn dataset_dir(&self, fallback: Option<&Path>) -> anyhow::Result<Option<PathBuf>> {
        match &self.dataset {
            Some(DatasetSource::Movielens { dir }) => {
                let dir = dir
                    .as_deref()
                    .map(|d| self.resolve_path(d))
                    .or_else(|| fallback.map(Path::to_path_buf))
                    .ok_or_else(|| invalid!("no MovieLens directory: set `dataset.dir`, --data-dir or {DATA_DIR_ENV}"))?;
                for f in ["ratings.dat", "users.dat", "movies.dat"] {
                    if !dir.join(f).is_file() {
                        return Err(invalid!("{} is missing {f}", dir.display()));
                    }
                }
                Ok(Some(dir))
            }
            _ => Ok(None),
        }
    }

    pub fn load_dataset(&self, fallback: Option<&Path>) -> anyhow::Result<Dataset> {
        match &self.dataset {
            Some(DatasetSource::Synthetic(s)) => Ok(generate(s)?),
            Some(DatasetSource::Movielens { .. }) => {
                let dir = self.dataset_dir(fallback)?.unwrap();
                let (ds, report) = parse_movielens_dir(&dir).with_context(|| format!("parsing {}", dir.display()))?;
                info!(
                    "{}: {} ratings, {} users, {} movies ({report:?})",
                    dir.display(),
                    ds.ratings.len(),
                    ds.num_users(),
                    ds.num_movies()
                );
                Ok(ds)
            }
            None => Err(invalid!("stage `{}` has no dataset", self.stage.name())),
        }
    }
}
