//! Indicator event logs: named sets of (actor, target) pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::movielens::Dataset;
use crate::error::{invalid, Error, Result};

pub const LIKE: &str = "like";
pub const DISLIKE: &str = "dislike";
pub const NEUTRAL: &str = "neutral";
pub const GENRE: &str = "genre";
pub const RELEASE_YEAR: &str = "release_year";
pub const TITLE_TOKEN: &str = "title_token";
pub const GENDER: &str = "gender";
pub const AGE: &str = "age";
pub const OCCUPATION: &str = "occupation";
pub const ZIP: &str = "zip";

pub const EVENT_INDICATORS: [&str; 2] = [DISLIKE, NEUTRAL];
pub const ITEM_PROPERTY_INDICATORS: [&str; 3] = [GENRE, RELEASE_YEAR, TITLE_TOKEN];
pub const USER_PROPERTY_INDICATORS: [&str; 4] = [GENDER, AGE, OCCUPATION, ZIP];

/// Which secondary indicator families to materialise. The primary `like`
/// indicator is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSelection {
    pub events: bool,
    pub item_properties: bool,
    pub user_properties: bool,
}

impl Default for IndicatorSelection {
    fn default() -> Self {
        IndicatorSelection::ALL
    }
}

impl IndicatorSelection {
    pub const PRIMARY_ONLY: Self = IndicatorSelection {
        events: false,
        item_properties: false,
        user_properties: false,
    };
    pub const ALL: Self = IndicatorSelection {
        events: true,
        item_properties: true,
        user_properties: true,
    };

    pub fn indicator_names(&self) -> Vec<&'static str> {
        let mut out = vec![LIKE];
        if self.events {
            out.extend(EVENT_INDICATORS);
        }
        if self.item_properties {
            out.extend(ITEM_PROPERTY_INDICATORS);
        }
        if self.user_properties {
            out.extend(USER_PROPERTY_INDICATORS);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLog {
    primary: String,
    indicators: BTreeMap<String, BTreeSet<(String, String)>>,
}

/// One line of the JSON lines export.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub indicator: String,
    pub actor: String,
    pub target: String,
}

impl EventLog {
    pub fn new(primary: impl Into<String>) -> Self {
        let primary = primary.into();
        let mut indicators = BTreeMap::new();
        indicators.insert(primary.clone(), BTreeSet::new());
        EventLog { primary, indicators }
    }

    pub fn primary(&self) -> &str {
        &self.primary
    }

    /// Adds a pair; returns false if it was already present.
    pub fn insert(&mut self, indicator: &str, actor: impl Into<String>, target: impl Into<String>) -> bool {
        self.indicators
            .entry(indicator.to_string())
            .or_default()
            .insert((actor.into(), target.into()))
    }

    /// Registers an indicator with no pairs yet.
    pub fn ensure(&mut self, indicator: &str) {
        self.indicators.entry(indicator.to_string()).or_default();
    }

    pub fn indicator(&self, name: &str) -> Result<&BTreeSet<(String, String)>> {
        self.indicators
            .get(name)
            .ok_or_else(|| Error::UnknownIndicator(name.to_string()))
    }

    pub fn indicator_names(&self) -> impl Iterator<Item = &str> {
        self.indicators.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.indicators.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Targets of `actor` under `indicator`, empty if none.
    pub fn targets_of(&self, indicator: &str, actor: &str) -> BTreeSet<String> {
        self.indicators
            .get(indicator)
            .map(|pairs| {
                pairs
                    .range((actor.to_string(), String::new())..)
                    .take_while(|(a, _)| a == actor)
                    .map(|(_, t)| t.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn records(&self) -> impl Iterator<Item = EventRecord> + '_ {
        self.indicators.iter().flat_map(|(name, pairs)| {
            pairs.iter().map(move |(a, t)| EventRecord {
                indicator: name.clone(),
                actor: a.clone(),
                target: t.clone(),
            })
        })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a JSON lines export; `primary` names the primary indicator.
    pub fn read_jsonl(path: impl AsRef<Path>, primary: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut log = EventLog::new(primary);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EventRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if !log.insert(&rec.indicator, rec.actor, rec.target) {
                return Err(invalid!("{}:{}: duplicate event", path.display(), i + 1));
            }
        }
        Ok(log)
    }
}

/// Lowercase whitespace tokens of a title with punctuation trimmed and the
/// trailing `(YYYY)` removed.
pub fn title_tokens(title: &str) -> BTreeSet<String> {
    let mut t = title.trim();
    if crate::data::movielens::release_year(t).is_some() {
        if let Some(open) = t.rfind('(') {
            t = t[..open].trim_end();
        }
    }
    t.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Event log of a dataset.
///
/// Ratings of 4 and 5 are `like` (primary), 3 is `neutral`, 1 and 2 are
/// `dislike`. Item properties become user→tag pairs through the movies a
/// user liked; user properties become user→own attribute pairs. Property
/// targets carry a `kind:` prefix so they never collide with movie ids.
pub fn build_event_log(ds: &Dataset, selection: IndicatorSelection) -> EventLog {
    let mut log = EventLog::new(LIKE);
    for name in selection.indicator_names() {
        log.ensure(name);
    }
    for r in &ds.ratings {
        let user = r.user_id.to_string();
        let movie = r.movie_id.to_string();
        if r.rating >= 4 {
            if selection.item_properties {
                if let Some(m) = ds.movies.get(&r.movie_id) {
                    for g in &m.genres {
                        log.insert(GENRE, user.clone(), format!("genre:{g}"));
                    }
                    if let Some(y) = m.release_year {
                        log.insert(RELEASE_YEAR, user.clone(), format!("year:{y}"));
                    }
                    for tok in title_tokens(&m.title) {
                        log.insert(TITLE_TOKEN, user.clone(), format!("title:{tok}"));
                    }
                }
            }
            log.insert(LIKE, user, movie);
        } else if selection.events {
            log.insert(if r.rating == 3 { NEUTRAL } else { DISLIKE }, user, movie);
        }
    }
    if selection.user_properties {
        for (id, u) in &ds.users {
            let user = id.to_string();
            log.insert(GENDER, user.clone(), format!("gender:{}", u.gender));
            log.insert(AGE, user.clone(), format!("age:{}", u.age));
            log.insert(OCCUPATION, user.clone(), format!("occupation:{}", u.occupation));
            log.insert(ZIP, user, format!("zip:{}", u.zip_code));
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::movielens::{Movie, RatingRecord, UserProfile};

    fn dataset(ratings: &[u8]) -> Dataset {
        let mut ds = Dataset::default();
        ds.users.insert(1, UserProfile { gender: "M".into(), age: 18, occupation: 4, zip_code: "02139".into() });
        ds.movies.insert(
            5,
            Movie { title: "The Matrix, (1999)".into(), release_year: Some(1999), genres: ["Action".to_string()].into() },
        );
        ds.ratings = ratings
            .iter()
            .enumerate()
            .map(|(i, &rating)| RatingRecord { user_id: 1, movie_id: 5, rating, timestamp: i as u64 })
            .collect();
        ds
    }

    #[test]
    fn ratings_map_to_indicators() {
        let log = build_event_log(&dataset(&[5]), IndicatorSelection::PRIMARY_ONLY);
        assert_eq!(log.indicator(LIKE).unwrap().len(), 1);
        assert_eq!(log.len(), 1);
        let log = build_event_log(&dataset(&[3]), IndicatorSelection::ALL);
        assert_eq!(log.indicator(NEUTRAL).unwrap().len(), 1);
        assert!(log.indicator(GENRE).unwrap().is_empty());
    }

    #[test]
    fn only_dislikes_leave_primary_empty() {
        let log = build_event_log(&dataset(&[2, 2]), IndicatorSelection::ALL);
        assert!(log.indicator(LIKE).unwrap().is_empty());
        assert_eq!(log.indicator(DISLIKE).unwrap().len(), 1);
    }

    #[test]
    fn properties_become_tags() {
        let log = build_event_log(&dataset(&[4]), IndicatorSelection::ALL);
        assert_eq!(log.targets_of(GENRE, "1"), ["genre:Action".to_string()].into());
        assert_eq!(log.targets_of(RELEASE_YEAR, "1"), ["year:1999".to_string()].into());
        assert_eq!(log.targets_of(TITLE_TOKEN, "1"), ["title:matrix".to_string(), "title:the".to_string()].into());
        assert_eq!(log.targets_of(ZIP, "1"), ["zip:02139".to_string()].into());
        assert!(matches!(log.indicator("purchase"), Err(Error::UnknownIndicator(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let log = build_event_log(&dataset(&[4, 1]), IndicatorSelection::ALL);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        log.write_jsonl(&path).unwrap();
        let back = EventLog::read_jsonl(&path, LIKE).unwrap();
        // Empty indicators are not exported.
        assert_eq!(back.records().collect::<Vec<_>>(), log.records().collect::<Vec<_>>());
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.lines().next().unwrap().starts_with("{\"indicator\":"));
    }
}
