//! Leave-one-out ranking metrics.

use std::collections::HashSet;
use std::hash::Hash;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn check_users(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::Shape(format!("{n} ranked lists for {m} held-out items")));
    }
    if n == 0 {
        return Err(Error::Undefined("no users to evaluate".into()));
    }
    Ok(())
}

/// 1-based position of `item` in `list`.
pub fn rank_of<I: PartialEq>(list: &[I], item: &I) -> Option<usize> {
    list.iter().position(|x| x == item).map(|p| p + 1)
}

pub fn ndcg_of_rank(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Share of users whose held-out item is in the first `k` of their list.
pub fn hit_rate_at_k<I: PartialEq>(ranked: &[Vec<I>], held_out: &[I], k: usize) -> Result<f64> {
    check_users(ranked.len(), held_out.len())?;
    let hits = ranked
        .iter()
        .zip(held_out)
        .filter(|(list, item)| rank_of(list, item).is_some_and(|r| r <= k))
        .count();
    Ok(hits as f64 / ranked.len() as f64)
}

/// Mean of `1 / log2(rank + 1)` for ranks within `k`, 0 otherwise.
pub fn ndcg_at_k<I: PartialEq>(ranked: &[Vec<I>], held_out: &[I], k: usize) -> Result<f64> {
    check_users(ranked.len(), held_out.len())?;
    let total: f64 = ranked
        .iter()
        .zip(held_out)
        .map(|(list, item)| rank_of(list, item).map_or(0.0, |r| ndcg_of_rank(r, k)))
        .sum();
    Ok(total / ranked.len() as f64)
}

/// One user's held-out item and everything they interacted with.
#[derive(Clone, Debug)]
pub struct LooCase<U, I> {
    pub user: U,
    pub held_out: I,
    pub seen: HashSet<I>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LooConfig {
    /// Sampled unseen items per user; `None` ranks against the whole catalogue.
    pub negatives: Option<usize>,
    pub k: usize,
    pub seed: u64,
}

impl Default for LooConfig {
    fn default() -> Self {
        LooConfig {
            negatives: Some(100),
            k: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub hit_rate: f64,
    pub ndcg: f64,
    pub users: usize,
    pub skipped: usize,
    /// Held-out rank per evaluated user, in case order.
    pub ranks: Vec<usize>,
}

/// Ranks each held-out item among unseen candidates scored by `scorer`.
///
/// `scorer(user, items)` returns one score per item; the held-out item is
/// always first. Ties count against the held-out item, so a constant scorer
/// never hits. Users without unseen items are skipped with a warning.
pub fn loo_ranking_eval<U, I, F>(cases: &[LooCase<U, I>], catalog: &[I], scorer: F, cfg: &LooConfig) -> Result<LooReport>
where
    U: Sync,
    I: Clone + Eq + Hash + Send + Sync,
    F: Fn(&U, &[I]) -> Vec<f64> + Sync,
{
    if cfg.k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    let outcomes: Vec<Result<Option<usize>>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let unseen: Vec<&I> = catalog
                .iter()
                .filter(|it| **it != case.held_out && !case.seen.contains(*it))
                .collect();
            if unseen.is_empty() {
                return Ok(None);
            }
            let mut candidates = vec![case.held_out.clone()];
            match cfg.negatives {
                Some(n) if n < unseen.len() => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(i as u64);
                    let mut picks = sample(&mut rng, unseen.len(), n).into_vec();
                    picks.sort_unstable();
                    candidates.extend(picks.into_iter().map(|p| unseen[p].clone()));
                }
                _ => candidates.extend(unseen.into_iter().cloned()),
            }
            let scores = scorer(&case.user, &candidates);
            if scores.len() != candidates.len() {
                return Err(Error::Shape(format!("scorer returned {} scores for {} items", scores.len(), candidates.len())));
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite("ranking score".into()));
            }
            let held = scores[0];
            Ok(Some(1 + scores[1..].iter().filter(|&&s| s >= held).count()))
        })
        .collect();

    let mut ranks = Vec::with_capacity(cases.len());
    let mut skipped = 0;
    for o in outcomes {
        match o? {
            Some(r) => ranks.push(r),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("ranking evaluation: skipped {skipped} users without unseen items");
    }
    if ranks.is_empty() {
        return Err(Error::Undefined("no users to evaluate".into()));
    }
    let n = ranks.len() as f64;
    Ok(LooReport {
        hit_rate: ranks.iter().filter(|&&r| r <= cfg.k).count() as f64 / n,
        ndcg: ranks.iter().map(|&r| ndcg_of_rank(r, cfg.k)).sum::<f64>() / n,
        users: ranks.len(),
        skipped,
        ranks,
    })
}
