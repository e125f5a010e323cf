//! Leave-one-out ranking runs for the popularity and cross-occurrence
//! recommenders.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cco::recommend::{popularity, CcoModel, CcoParams};
use crate::data::events::{build_event_log, EventLog, IndicatorSelection};
use crate::data::movielens::{Dataset, RatingRecord};
use crate::data::split::split_leave_one_out;
use crate::error::Result;
use crate::metrics::ranking::{loo_ranking_eval, LooCase, LooConfig, LooReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ranker {
    PopRec,
    Cco,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    pub ranker: Ranker,
    pub indicators: IndicatorSelection,
    pub cco: CcoParams,
    pub eval: LooConfig,
    /// Orders items the recommender leaves unscored by popularity instead
    /// of tying them at zero.
    pub popularity_backfill: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            ranker: Ranker::Cco,
            indicators: IndicatorSelection::PRIMARY_ONLY,
            cco: CcoParams::default(),
            eval: LooConfig::default(),
            popularity_backfill: false,
        }
    }
}

/// Training events, held-out ratings and evaluation cases of one dataset.
pub struct LooSetup {
    pub train: Dataset,
    pub held_out: Vec<RatingRecord>,
    pub cases: Vec<LooCase<String, String>>,
    pub catalog: Vec<String>,
}

impl LooSetup {
    pub fn new(ds: &Dataset) -> Self {
        let (train, held_out) = split_leave_one_out(ds);
        let mut seen: BTreeMap<u32, HashSet<String>> = BTreeMap::new();
        for r in &train.ratings {
            seen.entry(r.user_id).or_default().insert(r.movie_id.to_string());
        }
        let cases = held_out
            .iter()
            .map(|r| LooCase {
                user: r.user_id.to_string(),
                held_out: r.movie_id.to_string(),
                seen: seen.remove(&r.user_id).unwrap_or_default(),
            })
            .collect();
        let catalog = ds.movies.keys().map(u32::to_string).collect();
        LooSetup {
            train,
            held_out,
            cases,
            catalog,
        }
    }

    pub fn event_log(&self, selection: IndicatorSelection) -> EventLog {
        build_event_log(&self.train, selection)
    }
}

/// Replaces scores by their position in the order (score desc, popularity
/// desc); equal pairs keep equal values.
fn with_backfill(scores: &[f64], pops: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(pops[a].total_cmp(&pops[b])));
    let mut out = vec![0.0; scores.len()];
    let mut level = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 {
            let p = order[pos - 1];
            if scores[p] != scores[i] || pops[p] != pops[i] {
                level += 1.0;
            }
        }
        out[i] = level;
    }
    out
}

pub fn run_ranking(setup: &LooSetup, cfg: &RankingConfig) -> Result<LooReport> {
    let selection = match cfg.ranker {
        Ranker::PopRec => IndicatorSelection::PRIMARY_ONLY,
        Ranker::Cco => cfg.indicators,
    };
    let log = setup.event_log(selection);
    let pops = popularity(&log);
    let pop_of = |item: &String| pops.get(item).copied().unwrap_or(0) as f64;
    match cfg.ranker {
        Ranker::PopRec => loo_ranking_eval(&setup.cases, &setup.catalog, |_, items| items.iter().map(pop_of).collect(), &cfg.eval),
        Ranker::Cco => {
            let model = CcoModel::fit(&log, &selection.indicator_names(), &cfg.cco)?;
            loo_ranking_eval(
                &setup.cases,
                &setup.catalog,
                |user, items| {
                    let scores = model.scores(user);
                    let raw: Vec<f64> = items.iter().map(|i| scores.get(i).copied().unwrap_or(0.0)).collect();
                    if cfg.popularity_backfill {
                        with_backfill(&raw, &items.iter().map(pop_of).collect::<Vec<_>>())
                    } else {
                        raw
                    }
                },
                &cfg.eval,
            )
        }
    }
}
