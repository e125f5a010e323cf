//! Deterministic train/validation/test and leave-one-out splits.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::movielens::{Dataset, RatingRecord};
use crate::error::{invalid, Result};

/// Shuffles `items` with `seed` and cuts it into three consecutive parts.
///
/// The first two part sizes are `round(n·ratio)`; the third takes the rest,
/// so every size is within one of its exact proportion.
pub fn split_train_val_test<S: Clone>(items: &[S], ratios: (f64, f64, f64), seed: u64) -> Result<(Vec<S>, Vec<S>, Vec<S>)> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !r.is_finite() || *r < 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(invalid!("split ratios {ratios:?} must be non-negative and sum to 1"));
    }
    let n = items.len();
    let n_train = ((n as f64 * a).round() as usize).min(n);
    let n_val = ((n as f64 * b).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

/// Keeps `round(fraction·n_c)` seeded-random items of every class `c`, in
/// their original order.
pub fn stratified_subsample<S: Clone, K: Ord>(items: &[S], class_of: impl Fn(&S) -> K, fraction: f64, seed: u64) -> Result<Vec<S>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid!("subsample fraction {fraction} outside (0, 1]"));
    }
    let mut classes: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, s) in items.iter().enumerate() {
        classes.entry(class_of(s)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for mut ix in classes.into_values() {
        let n = (ix.len() as f64 * fraction).round() as usize;
        ix.shuffle(&mut rng);
        keep.extend_from_slice(&ix[..n]);
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// Holds out each user's latest rating (larger movie id on timestamp ties).
///
/// Returns the remaining ratings as a dataset sharing the user and movie
/// tables, and the held-out ratings in user order. Users with a single rating
/// are dropped entirely.
pub fn split_leave_one_out(ds: &Dataset) -> (Dataset, Vec<RatingRecord>) {
    // user -> (index of latest rating, rating count)
    let mut latest: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (i, r) in ds.ratings.iter().enumerate() {
        let e = latest.entry(r.user_id).or_insert((i, 0));
        e.1 += 1;
        let best = &ds.ratings[e.0];
        if (r.timestamp, r.movie_id) > (best.timestamp, best.movie_id) {
            e.0 = i;
        }
    }
    let excluded = latest.values().filter(|(_, count)| *count < 2).count();
    if excluded > 0 {
        warn!("leave-one-out: excluded {excluded} users with a single interaction");
    }
    let mut drop = vec![false; ds.ratings.len()];
    let mut held = Vec::with_capacity(latest.len() - excluded);
    for &(best, count) in latest.values() {
        if count >= 2 {
            held.push(ds.ratings[best]);
            drop[best] = true;
        }
    }
    let train = ds
        .ratings
        .iter()
        .zip(&drop)
        .filter(|(r, d)| !**d && latest[&r.user_id].1 >= 2)
        .map(|(r, _)| *r)
        .collect();
    (ds.with_ratings(train), held)
}
