//! MovieLens 1M `::`-delimited file parsing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_id: u32,
    pub movie_id: u32,
    /// 1..=5 stars.
    pub rating: u8,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub gender: String,
    /// Bucket lower bound as published (1, 18, 25, 35, 45, 50, 56).
    pub age: u8,
    pub occupation: u8,
    pub zip_code: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Movie {
    pub title: String,
    pub release_year: Option<u16>,
    pub genres: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub ratings: Vec<RatingRecord>,
    pub users: BTreeMap<u32, UserProfile>,
    pub movies: BTreeMap<u32, Movie>,
}

/// Line-level problems found while parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub malformed_lines: usize,
    pub unresolved_ratings: usize,
    pub unrated_movies: usize,
}

impl Dataset {
    /// Same user and movie tables with a different rating list.
    pub fn with_ratings(&self, ratings: Vec<RatingRecord>) -> Dataset {
        Dataset {
            ratings,
            users: self.users.clone(),
            movies: self.movies.clone(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_movies(&self) -> usize {
        self.movies.len()
    }

    /// Hex SHA-256 of the JSON encoding of all three tables.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        Ok(hex::encode(&h.finalize()[..]))
    }
}

fn read_latin1(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    // ISO-8859-1 maps each byte to the code point of the same value.
    Ok(bytes.iter().map(|&b| b as char).collect())
}

fn parse_rating(line: &str) -> Option<RatingRecord> {
    let mut it = line.split("::");
    let user_id = it.next()?.trim().parse().ok()?;
    let movie_id = it.next()?.trim().parse().ok()?;
    let rating: u8 = it.next()?.trim().parse().ok()?;
    let timestamp = it.next()?.trim().parse().ok()?;
    if it.next().is_some() || !(1..=5).contains(&rating) {
        return None;
    }
    Some(RatingRecord {
        user_id,
        movie_id,
        rating,
        timestamp,
    })
}

fn parse_user(line: &str) -> Option<(u32, UserProfile)> {
    let parts: Vec<&str> = line.split("::").collect();
    if parts.len() != 5 {
        return None;
    }
    let id = parts[0].trim().parse().ok()?;
    let gender = parts[1].trim();
    if gender.is_empty() {
        return None;
    }
    Some((
        id,
        UserProfile {
            gender: gender.to_string(),
            age: parts[2].trim().parse().ok()?,
            occupation: parts[3].trim().parse().ok()?,
            zip_code: parts[4].trim().to_string(),
        },
    ))
}

/// Release year from a trailing `(YYYY)` in the title.
pub fn release_year(title: &str) -> Option<u16> {
    let t = title.trim_end();
    let open = t.rfind('(')?;
    let inner = t[open + 1..].strip_suffix(')')?;
    if inner.len() == 4 {
        inner.parse().ok()
    } else {
        None
    }
}

fn parse_movie(line: &str) -> Option<(u32, Movie)> {
    // Titles never contain "::", so the genre list is the last field.
    let first = line.find("::")?;
    let last = line.rfind("::")?;
    if first == last {
        return None;
    }
    let id = line[..first].trim().parse().ok()?;
    let title = line[first + 2..last].trim().to_string();
    let genres = line[last + 2..]
        .split('|')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(str::to_string)
        .collect();
    Some((
        id,
        Movie {
            release_year: release_year(&title),
            title,
            genres,
        },
    ))
}

fn parse_lines<T>(text: &str, what: &str, report: &mut ParseReport, f: impl Fn(&str) -> Option<T>) -> Vec<T> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match f(line) {
            Some(v) => out.push(v),
            None => {
                report.malformed_lines += 1;
                warn!("{what}: malformed line {}: {line:?}", lineno + 1);
            }
        }
    }
    out
}

/// Parses `ratings.dat`, `users.dat` and `movies.dat`.
///
/// Ratings whose user or movie is unknown are dropped with a warning. Movies
/// without any surviving rating are removed so that the movie table matches
/// the rated catalogue.
pub fn parse_movielens(
    ratings_path: impl AsRef<Path>,
    users_path: impl AsRef<Path>,
    movies_path: impl AsRef<Path>,
) -> Result<(Dataset, ParseReport)> {
    let ratings_text = read_latin1(ratings_path.as_ref())?;
    let users_text = read_latin1(users_path.as_ref())?;
    let movies_text = read_latin1(movies_path.as_ref())?;

    let mut report = ParseReport::default();
    let users: BTreeMap<u32, UserProfile> =
        parse_lines(&users_text, "users", &mut report, parse_user).into_iter().collect();
    let mut movies: BTreeMap<u32, Movie> =
        parse_lines(&movies_text, "movies", &mut report, parse_movie).into_iter().collect();
    let parsed = parse_lines(&ratings_text, "ratings", &mut report, parse_rating);

    let mut ratings = Vec::with_capacity(parsed.len());
    for r in parsed {
        if users.contains_key(&r.user_id) && movies.contains_key(&r.movie_id) {
            ratings.push(r);
        } else {
            report.unresolved_ratings += 1;
        }
    }
    if report.unresolved_ratings > 0 {
        warn!("dropped {} ratings with unknown user or movie", report.unresolved_ratings);
    }

    let rated: HashSet<u32> = ratings.iter().map(|r| r.movie_id).collect();
    let before = movies.len();
    movies.retain(|id, _| rated.contains(id));
    report.unrated_movies = before - movies.len();

    Ok((Dataset { ratings, users, movies }, report))
}

/// [`parse_movielens`] on the canonical file names inside `dir`.
pub fn parse_movielens_dir(dir: impl AsRef<Path>) -> Result<(Dataset, ParseReport)> {
    let dir = dir.as_ref();
    parse_movielens(dir.join("ratings.dat"), dir.join("users.dat"), dir.join("movies.dat"))
}
