//! Cross-occurrence similarity between a secondary indicator and the primary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cco::llr::llr;
use crate::cco::matrix::SparseInteractionMatrix;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_MAX_CORRELATORS: usize = 50;
pub const DEFAULT_LLR_THRESHOLD: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlated {
    pub item: String,
    pub llr: f64,
}

/// For every primary target, the secondary targets most associated with it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub indicator: String,
    /// Lists sorted by descending score, then ascending item id.
    pub rows: BTreeMap<String, Vec<Correlated>>,
}

#[derive(Serialize, Deserialize)]
struct SimilarityLine {
    item: String,
    indicator: String,
    correlated: Vec<Correlated>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.values().all(Vec::is_empty)
    }

    pub fn get(&self, primary_item: &str, secondary_item: &str) -> Option<f64> {
        self.rows
            .get(primary_item)?
            .iter()
            .find(|c| c.item == secondary_item)
            .map(|c| c.llr)
    }

    /// Secondary item → (primary item, score) pairs, for scoring histories.
    pub fn inverted(&self) -> BTreeMap<&str, Vec<(&str, f64)>> {
        let mut out: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for (b, list) in &self.rows {
            for c in list {
                out.entry(c.item.as_str()).or_default().push((b.as_str(), c.llr));
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (item, correlated) in &self.rows {
            let line = SimilarityLine {
                item: item.clone(),
                indicator: self.indicator.clone(),
                correlated: correlated.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| Error::io("<similarity>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads every indicator from a JSON lines file.
    pub fn load_all(path: impl AsRef<Path>) -> Result<BTreeMap<String, SimilarityMatrix>> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out: BTreeMap<String, SimilarityMatrix> = BTreeMap::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SimilarityLine = serde_json::from_str(&line)?;
            let m = out.entry(rec.indicator.clone()).or_insert_with(|| SimilarityMatrix {
                indicator: rec.indicator.clone(),
                rows: BTreeMap::new(),
            });
            m.rows.insert(rec.item, rec.correlated);
        }
        Ok(out)
    }
}

fn rank_and_truncate(list: &mut Vec<Correlated>, max: usize) {
    list.sort_by(|x, y| y.llr.total_cmp(&x.llr).then_with(|| x.item.cmp(&y.item)));
    list.truncate(max);
}

/// LLR association of every co-occurring (secondary target, primary target)
/// pair over the union of both matrices' actors.
///
/// For primary target `b` and secondary target `a`: `k11` actors did both,
/// `k12` did `a` only, `k21` did `b` only and `k22` neither. Pairs never
/// done by the same actor are not scored. Pairs with equal ids, scores not
/// above `threshold` and anything past the best `max_correlators` per `b` are
/// dropped.
pub fn cross_occurrence(
    primary: &SparseInteractionMatrix,
    secondary: &SparseInteractionMatrix,
    indicator: &str,
    threshold: f64,
    max_correlators: usize,
) -> Result<SimilarityMatrix> {
    if threshold.is_nan() {
        return Err(invalid!("llr threshold is NaN"));
    }
    let to_secondary: Vec<Option<usize>> = primary.row_ids().iter().map(|id| secondary.row_of(id)).collect();
    let shared = to_secondary.iter().filter(|s| s.is_some()).count();
    if primary.rows() > 0 && secondary.rows() > 0 && shared == 0 {
        return Err(invalid!("primary and `{indicator}` matrices have no actor in common"));
    }
    let universe = (primary.rows() + secondary.rows() - shared) as i64;

    let rows: Vec<(String, Vec<Correlated>)> = (0..primary.cols())
        .into_par_iter()
        .map_init(
            || (vec![0u32; secondary.cols()], Vec::new()),
            |(counts, touched), b| {
                for &actor in primary.col(b) {
                    if let Some(s) = to_secondary[actor] {
                        for &a in secondary.row(s) {
                            if counts[a] == 0 {
                                touched.push(a);
                            }
                            counts[a] += 1;
                        }
                    }
                }
                let b_id = primary.col_id(b);
                let b_count = primary.col_count(b) as i64;
                let mut list = Vec::new();
                for &a in touched.iter() {
                    let k11 = counts[a] as i64;
                    counts[a] = 0;
                    let a_id = secondary.col_id(a);
                    if a_id == b_id {
                        continue;
                    }
                    let k12 = secondary.col_count(a) as i64 - k11;
                    let k21 = b_count - k11;
                    let k22 = universe - k11 - k12 - k21;
                    let score = llr(k11, k12, k21, k22).expect("counts are non-negative by construction");
                    if score > threshold {
                        list.push(Correlated {
                            item: a_id.to_string(),
                            llr: score,
                        });
                    }
                }
                touched.clear();
                rank_and_truncate(&mut list, max_correlators);
                (b_id.to_string(), list)
            },
        )
        .filter(|(_, list)| !list.is_empty())
        .collect();

    Ok(SimilarityMatrix {
        indicator: indicator.to_string(),
        rows: rows.into_iter().collect(),
    })
}

/// Brute-force reference: enumerates every target pair and counts each
/// contingency cell from the raw pair sets.
pub fn cross_occurrence_reference(
    primary: &BTreeSet<(String, String)>,
    secondary: &BTreeSet<(String, String)>,
    indicator: &str,
    threshold: f64,
    max_correlators: usize,
) -> SimilarityMatrix {
    let actors: BTreeSet<&str> = primary.iter().chain(secondary).map(|(a, _)| a.as_str()).collect();
    let p_items: BTreeSet<&str> = primary.iter().map(|(_, t)| t.as_str()).collect();
    let s_items: BTreeSet<&str> = secondary.iter().map(|(_, t)| t.as_str()).collect();
    let has = |set: &BTreeSet<(String, String)>, a: &str, t: &str| set.contains(&(a.to_string(), t.to_string()));
    let mut rows = BTreeMap::new();
    for b in &p_items {
        let mut list = Vec::new();
        for a in &s_items {
            if a == b {
                continue;
            }
            let mut k = [0i64; 4];
            for actor in &actors {
                let did_a = has(secondary, actor, a);
                let did_b = has(primary, actor, b);
                k[match (did_a, did_b) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                }] += 1;
            }
            if k[0] == 0 {
                continue;
            }
            let score = llr(k[0], k[1], k[2], k[3]).unwrap();
            if score > threshold {
                list.push(Correlated {
                    item: a.to_string(),
                    llr: score,
                });
            }
        }
        rank_and_truncate(&mut list, max_correlators);
        if !list.is_empty() {
            rows.insert(b.to_string(), list);
        }
    }
    SimilarityMatrix {
        indicator: indicator.to_string(),
        rows,
    }
}
