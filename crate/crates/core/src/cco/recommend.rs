//! Additive multi-indicator scoring and top-k recommendation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cco::matrix::build_interaction_matrix;
use crate::cco::similarity::{cross_occurrence, SimilarityMatrix, DEFAULT_LLR_THRESHOLD, DEFAULT_MAX_CORRELATORS};
use crate::data::events::EventLog;
use crate::error::{invalid, Error, Result};

/// Items in descending score order, ties by ascending item id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub items: Vec<(String, f64)>,
}

impl RecommendationList {
    /// Ranks a score map, dropping `exclude`, keeping the best `k`.
    pub fn from_scores(scores: impl IntoIterator<Item = (String, f64)>, exclude: &BTreeSet<String>, k: usize) -> Self {
        let mut items: Vec<(String, f64)> = scores.into_iter().filter(|(i, _)| !exclude.contains(i)).collect();
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.truncate(k);
        RecommendationList { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> Vec<&str> {
        self.items.iter().map(|(i, _)| i.as_str()).collect()
    }
}

/// Query shape accepted by the recommender.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub user: String,
    pub k: usize,
    #[serde(default = "default_exclude")]
    pub exclude_seen: bool,
}

fn default_exclude() -> bool {
    true
}

/// Secondary item → correlated primary items.
pub type InvertedIndex = HashMap<String, Vec<(String, f64)>>;

fn invert(sim: &SimilarityMatrix) -> InvertedIndex {
    sim.inverted()
        .into_iter()
        .map(|(a, list)| (a.to_string(), list.into_iter().map(|(b, s)| (b.to_string(), s)).collect()))
        .collect()
}

/// `score(b) = Σ_indicator Σ_{a ∈ history} llr(a, b)` over correlated pairs.
pub fn score_user(
    histories: &BTreeMap<String, BTreeSet<String>>,
    index: &BTreeMap<String, InvertedIndex>,
) -> Result<BTreeMap<String, f64>> {
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for (indicator, history) in histories {
        let inv = index
            .get(indicator)
            .ok_or_else(|| Error::UnknownIndicator(indicator.clone()))?;
        for a in history {
            if let Some(list) = inv.get(a) {
                for (b, s) in list {
                    *scores.entry(b.clone()).or_insert(0.0) += s;
                }
            }
        }
    }
    Ok(scores)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcoParams {
    pub llr_threshold: f64,
    pub max_correlators: usize,
}

impl Default for CcoParams {
    fn default() -> Self {
        CcoParams {
            llr_threshold: DEFAULT_LLR_THRESHOLD,
            max_correlators: DEFAULT_MAX_CORRELATORS,
        }
    }
}

/// Similarities for every indicator plus the per-user histories they score.
#[derive(Clone, Debug)]
pub struct CcoModel {
    primary: String,
    similarities: BTreeMap<String, SimilarityMatrix>,
    index: BTreeMap<String, InvertedIndex>,
    histories: HashMap<String, BTreeMap<String, BTreeSet<String>>>,
}

impl CcoModel {
    /// Computes the cross-occurrence of each listed indicator with the
    /// primary one. `indicators` must include the primary indicator to get
    /// the plain co-occurrence term.
    pub fn fit(log: &EventLog, indicators: &[&str], params: &CcoParams) -> Result<Self> {
        if indicators.is_empty() {
            return Err(invalid!("no indicators selected"));
        }
        let primary = build_interaction_matrix(log, log.primary())?;
        let mut similarities = BTreeMap::new();
        for &name in indicators {
            let secondary = build_interaction_matrix(log, name)?;
            let sim = if primary.rows() == 0 || secondary.rows() == 0 {
                SimilarityMatrix {
                    indicator: name.to_string(),
                    ..Default::default()
                }
            } else {
                cross_occurrence(&primary, &secondary, name, params.llr_threshold, params.max_correlators)?
            };
            similarities.insert(name.to_string(), sim);
        }
        Self::from_similarities(log, similarities)
    }

    /// Rebuilds a model from stored similarities and the event log holding
    /// user histories.
    pub fn from_similarities(log: &EventLog, similarities: BTreeMap<String, SimilarityMatrix>) -> Result<Self> {
        let mut histories: HashMap<String, BTreeMap<String, BTreeSet<String>>> = HashMap::new();
        let mut wanted: Vec<&str> = similarities.keys().map(String::as_str).collect();
        if !wanted.contains(&log.primary()) {
            wanted.push(log.primary());
        }
        for name in wanted {
            for (actor, target) in log.indicator(name)? {
                histories
                    .entry(actor.clone())
                    .or_default()
                    .entry(name.to_string())
                    .or_default()
                    .insert(target.clone());
            }
        }
        let index = similarities.iter().map(|(k, s)| (k.clone(), invert(s))).collect();
        Ok(CcoModel {
            primary: log.primary().to_string(),
            similarities,
            index,
            histories,
        })
    }

    pub fn similarities(&self) -> &BTreeMap<String, SimilarityMatrix> {
        &self.similarities
    }

    pub fn index(&self) -> &BTreeMap<String, InvertedIndex> {
        &self.index
    }

    /// Histories of `user` for the indicators this model scores.
    pub fn histories(&self, user: &str) -> BTreeMap<String, BTreeSet<String>> {
        self.histories
            .get(user)
            .map(|h| {
                h.iter()
                    .filter(|(k, _)| self.index.contains_key(*k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn seen(&self, user: &str) -> BTreeSet<String> {
        self.histories
            .get(user)
            .and_then(|h| h.get(&self.primary))
            .cloned()
            .unwrap_or_default()
    }

    pub fn scores(&self, user: &str) -> BTreeMap<String, f64> {
        score_user(&self.histories(user), &self.index).expect("histories restricted to indexed indicators")
    }

    /// Unknown users get an empty list.
    pub fn recommend_top_k(&self, user: &str, k: usize, exclude_seen: bool) -> Result<RecommendationList> {
        if k == 0 {
            return Err(invalid!("k must be at least 1"));
        }
        let exclude = if exclude_seen { self.seen(user) } else { BTreeSet::new() };
        Ok(RecommendationList::from_scores(self.scores(user), &exclude, k))
    }

    pub fn query(&self, q: &Query) -> Result<RecommendationList> {
        self.recommend_top_k(&q.user, q.k, q.exclude_seen)
    }
}

/// Primary-indicator target counts.
pub fn popularity(log: &EventLog) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    if let Ok(pairs) = log.indicator(log.primary()) {
        for (_, t) in pairs {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Most-liked items, ties by item id.
pub fn pop_rec(log: &EventLog, k: usize) -> RecommendationList {
    RecommendationList::from_scores(
        popularity(log).into_iter().map(|(i, c)| (i, c as f64)),
        &BTreeSet::new(),
        k,
    )
}
