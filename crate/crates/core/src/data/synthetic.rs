//! Small MovieLens-shaped datasets with planted taste structure, for tests and
//! demos when the real files are not available.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index::sample_weighted;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::movielens::{Dataset, Movie, RatingRecord, UserProfile};
use crate::error::{invalid, Error, Result};

const GENRES: [&str; 18] = [
    "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime", "Documentary", "Drama", "Fantasy",
    "Film-Noir", "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
];
const AGES: [u8; 7] = [1, 18, 25, 35, 45, 50, 56];
const WORDS: [&str; 12] = [
    "night", "river", "love", "star", "city", "ghost", "return", "last", "dark", "king", "road", "summer",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub users: usize,
    pub movies: usize,
    /// Number of latent taste clusters.
    pub tastes: usize,
    pub min_ratings: usize,
    pub max_ratings: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 300,
            movies: 200,
            tastes: 6,
            min_ratings: 20,
            max_ratings: 60,
            seed: 7,
        }
    }
}

/// Users belong to one taste cluster; each movie has a home cluster. Movies
/// are picked with probability ∝ popularity·affinity, and ratings are high on
/// the user's own cluster, with occupation and gender tilting the score.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.users == 0 || cfg.tastes == 0 || cfg.min_ratings == 0 || cfg.min_ratings > cfg.max_ratings {
        return Err(invalid!("degenerate synthetic config {cfg:?}"));
    }
    if cfg.max_ratings > cfg.movies {
        return Err(invalid!("max_ratings {} exceeds movie count {}", cfg.max_ratings, cfg.movies));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 0.7).expect("valid normal");
    let mut ds = Dataset::default();

    let mut movie_taste = Vec::with_capacity(cfg.movies);
    let mut popularity = Vec::with_capacity(cfg.movies);
    for m in 0..cfg.movies {
        let taste = rng.random_range(0..cfg.tastes);
        movie_taste.push(taste);
        popularity.push(1.0 / (1.0 + m as f64).powf(0.6));
        let mut genres = BTreeSet::new();
        genres.insert(GENRES[taste % GENRES.len()].to_string());
        if rng.random_bool(0.4) {
            genres.insert(GENRES[rng.random_range(0..GENRES.len())].to_string());
        }
        let year = 1950 + rng.random_range(0..50u16);
        let title = format!(
            "{} {} {} ({year})",
            WORDS[rng.random_range(0..WORDS.len())],
            WORDS[taste % WORDS.len()],
            m + 1
        );
        ds.movies.insert(
            m as u32 + 1,
            Movie {
                title,
                release_year: Some(year),
                genres,
            },
        );
    }

    let mut clock = 956_703_932u64;
    for u in 0..cfg.users {
        let taste = rng.random_range(0..cfg.tastes);
        let gender = if rng.random_bool(0.5) { "M" } else { "F" };
        let profile = UserProfile {
            gender: gender.to_string(),
            age: AGES[(taste + rng.random_range(0..2)) % AGES.len()],
            occupation: rng.random_range(0..21),
            zip_code: format!("{:05}", rng.random_range(0..100_000u32)),
        };
        let weights: Vec<f64> = (0..cfg.movies)
            .map(|m| popularity[m] * if movie_taste[m] == taste { 6.0 } else { 1.0 })
            .collect();
        let count = rng.random_range(cfg.min_ratings..=cfg.max_ratings);
        let mut picks = sample_weighted(&mut rng, cfg.movies, |m| weights[m], count)
            .map_err(|e| Error::InvalidArgument(format!("weighted sampling: {e}")))?
            .into_vec();
        picks.shuffle(&mut rng);
        for m in picks {
            let own = movie_taste[m] == taste;
            let tilt = if gender == "F" { 0.3 } else { -0.3 } * if movie_taste[m] % 2 == 0 { 1.0 } else { -1.0 };
            let score = if own { 4.3 } else { 2.4 } + tilt + 0.02 * profile.occupation as f64 + noise.sample(&mut rng);
            clock += rng.random_range(1..5_000);
            ds.ratings.push(RatingRecord {
                user_id: u as u32 + 1,
                movie_id: m as u32 + 1,
                rating: score.round().clamp(1.0, 5.0) as u8,
                timestamp: clock,
            });
        }
        ds.users.insert(u as u32 + 1, profile);
    }
    let rated: BTreeSet<u32> = ds.ratings.iter().map(|r| r.movie_id).collect();
    ds.movies.retain(|id, _| rated.contains(id));
    Ok(ds)
}

/// Writes `ratings.dat`, `users.dat` and `movies.dat` in the `::` layout.
pub fn write_movielens_dir(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ratings = String::new();
    for r in &ds.ratings {
        ratings.push_str(&format!("{}::{}::{}::{}\n", r.user_id, r.movie_id, r.rating, r.timestamp));
    }
    let mut users = String::new();
    for (id, u) in &ds.users {
        users.push_str(&format!("{id}::{}::{}::{}::{}\n", u.gender, u.age, u.occupation, u.zip_code));
    }
    let mut movies = String::new();
    for (id, m) in &ds.movies {
        let genres: Vec<&str> = m.genres.iter().map(String::as_str).collect();
        movies.push_str(&format!("{id}::{}::{}\n", m.title, genres.join("|")));
    }
    for (name, text) in [("ratings.dat", ratings), ("users.dat", users), ("movies.dat", movies)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::movielens::parse_movielens_dir;

    #[test]
    fn generated_data_round_trips_through_parser() {
        let ds = generate(&SyntheticConfig { users: 30, movies: 40, max_ratings: 25, ..Default::default() }).unwrap();
        assert_eq!(ds.num_users(), 30);
        let dir = tempfile::tempdir().unwrap();
        write_movielens_dir(&ds, dir.path()).unwrap();
        let (back, report) = parse_movielens_dir(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(report.malformed_lines, 0);
    }

    #[test]
    fn deterministic_and_has_all_rating_levels() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        for level in 1..=5 {
            assert!(a.ratings.iter().any(|r| r.rating == level), "no rating {level}");
        }
    }
}
