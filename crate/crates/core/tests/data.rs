mod common;

use std::collections::{BTreeMap, BTreeSet};

use fedrec_core::data::ctr::binarize_ratings;
use fedrec_core::data::events::{build_event_log, IndicatorSelection, DISLIKE, LIKE, NEUTRAL};
use fedrec_core::data::movielens::{parse_movielens_dir, Dataset, Movie, RatingRecord, UserProfile};
use fedrec_core::data::split::{split_leave_one_out, split_train_val_test};
use fedrec_core::data::synthetic::{generate, write_movielens_dir, SyntheticConfig};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::btree_map((1u32..25, 1u32..40), (1u8..=5, 0u64..60), 1..200).prop_map(|cells| {
        let ratings: Vec<RatingRecord> = cells
            .iter()
            .map(|(&(user_id, movie_id), &(rating, timestamp))| RatingRecord { user_id, movie_id, rating, timestamp })
            .collect();
        let users = ratings
            .iter()
            .map(|r| {
                let profile = UserProfile { gender: "F".into(), age: 25, occupation: (r.user_id % 21) as u8, zip_code: format!("{:05}", r.user_id) };
                (r.user_id, profile)
            })
            .collect();
        let movies = ratings
            .iter()
            .map(|r| {
                let genres = BTreeSet::from([format!("g{}", r.movie_id % 4)]);
                (r.movie_id, Movie { title: format!("Film {} (1990)", r.movie_id), release_year: Some(1990), genres })
            })
            .collect();
        Dataset { ratings, users, movies }
    })
}

proptest! {
    #![proptest_config(common::config(256))]

    #[test]
    fn binarized_labels_partition_the_non_neutral_ratings(ds in dataset()) {
        let records = binarize_ratings(&ds);
        let neutral = ds.ratings.iter().filter(|r| r.rating == 3).count();
        prop_assert_eq!(records.len(), ds.ratings.len() - neutral);
        let positives = ds.ratings.iter().filter(|r| r.rating > 3).count();
        prop_assert_eq!(records.iter().filter(|r| r.label == 1).count(), positives);
        for (rec, r) in records.iter().zip(ds.ratings.iter().filter(|r| r.rating != 3)) {
            prop_assert_eq!((rec.user_id, rec.movie_id), (r.user_id, r.movie_id));
        }
    }

    #[test]
    fn leave_one_out_holds_out_each_latest_rating(ds in dataset()) {
        let (train, held) = split_leave_one_out(&ds);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for r in &ds.ratings {
            *counts.entry(r.user_id).or_default() += 1;
        }
        let retained: Vec<u32> = counts.iter().filter(|(_, &c)| c >= 2).map(|(&u, _)| u).collect();
        prop_assert_eq!(held.iter().map(|r| r.user_id).collect::<Vec<_>>(), retained.clone());
        let train_set: BTreeSet<RatingRecord> = train.ratings.iter().copied().collect();
        let held_set: BTreeSet<RatingRecord> = held.iter().copied().collect();
        prop_assert!(train_set.is_disjoint(&held_set));
        let expected: BTreeSet<RatingRecord> = ds.ratings.iter().filter(|r| counts[&r.user_id] >= 2).copied().collect();
        prop_assert_eq!(train_set.union(&held_set).copied().collect::<BTreeSet<_>>(), expected);
        for h in &held {
            prop_assert!(train.ratings.iter().filter(|r| r.user_id == h.user_id).all(|r| (r.timestamp, r.movie_id) < (h.timestamp, h.movie_id)));
        }
        prop_assert_eq!(split_leave_one_out(&ds), (train, held));
    }

    #[test]
    fn three_way_split_is_a_seeded_permutation(n in 0usize..500, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let (a, b, c) = split_train_val_test(&items, (0.8, 0.1, 0.1), seed).unwrap();
        prop_assert!((a.len() as f64 - 0.8 * n as f64).abs() <= 1.0);
        prop_assert!((b.len() as f64 - 0.1 * n as f64).abs() <= 1.0);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, items.clone());
        prop_assert_eq!(split_train_val_test(&items, (0.8, 0.1, 0.1), seed).unwrap(), (a, b, c));
    }

    #[test]
    fn event_indicators_follow_the_rating_scale(ds in dataset()) {
        let log = build_event_log(&ds, IndicatorSelection::ALL);
        prop_assert_eq!(log.primary(), LIKE);
        for (indicator, keep) in [(LIKE, 4u8..=5), (NEUTRAL, 3..=3), (DISLIKE, 1..=2)] {
            let expected: BTreeSet<(String, String)> = ds
                .ratings
                .iter()
                .filter(|r| keep.contains(&r.rating))
                .map(|r| (r.user_id.to_string(), r.movie_id.to_string()))
                .collect();
            prop_assert_eq!(log.indicator(indicator).unwrap(), &expected);
        }
        let primary_only = build_event_log(&ds, IndicatorSelection::PRIMARY_ONLY);
        prop_assert_eq!(primary_only.indicator_names().collect::<Vec<_>>(), vec![LIKE]);
    }
}

#[test]
fn written_dataset_parses_back() {
    let ds = generate(&SyntheticConfig { users: 40, movies: 30, min_ratings: 5, max_ratings: 20, ..SyntheticConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_movielens_dir(&ds, dir.path()).unwrap();
    let (back, report) = parse_movielens_dir(dir.path()).unwrap();
    assert_eq!(report.malformed_lines, 0);
    assert_eq!(report.unresolved_ratings, 0);
    assert_eq!(back.ratings, ds.ratings);
    assert_eq!(back.users, ds.users);
    let rated: BTreeSet<u32> = ds.ratings.iter().map(|r| r.movie_id).collect();
    assert_eq!(back.movies.keys().copied().collect::<BTreeSet<_>>(), rated);
    for (id, m) in &back.movies {
        assert_eq!(m, &ds.movies[id]);
    }
}

#[test]
fn synthetic_generation_is_seeded() {
    let cfg = SyntheticConfig { users: 50, movies: 40, min_ratings: 5, max_ratings: 20, ..SyntheticConfig::default() };
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    assert_ne!(generate(&cfg).unwrap(), generate(&SyntheticConfig { seed: 99, ..cfg }).unwrap());
}
