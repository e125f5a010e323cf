//! Binary actor × target matrices in compressed row and column form.

use std::collections::{BTreeSet, HashMap};

use crate::data::events::EventLog;
use crate::error::Result;

/// Sparse 0/1 matrix with string id dictionaries on both axes.
///
/// Ids are assigned in sorted order, so two matrices built from the same
/// pairs are identical.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseInteractionMatrix {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    row_lookup: HashMap<String, usize>,
    col_lookup: HashMap<String, usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparseInteractionMatrix {
    pub fn from_pairs<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let pairs: BTreeSet<(&str, &str)> = pairs.into_iter().collect();
        let row_ids: Vec<String> = pairs.iter().map(|p| p.0).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
        let col_ids: Vec<String> = pairs.iter().map(|p| p.1).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
        let row_lookup: HashMap<String, usize> = row_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let col_lookup: HashMap<String, usize> = col_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();

        // `pairs` is sorted by (row, col), which is CSR order.
        let mut row_ptr = vec![0usize; row_ids.len() + 1];
        let mut col_idx = Vec::with_capacity(pairs.len());
        let mut col_counts = vec![0usize; col_ids.len()];
        for (r, c) in &pairs {
            let (r, c) = (row_lookup[*r], col_lookup[*c]);
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            col_counts[c] += 1;
        }
        for i in 0..row_ids.len() {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_ptr = vec![0usize; col_ids.len() + 1];
        for j in 0..col_ids.len() {
            col_ptr[j + 1] = col_ptr[j] + col_counts[j];
        }
        let mut fill = col_ptr.clone();
        let mut row_idx = vec![0usize; col_idx.len()];
        for r in 0..row_ids.len() {
            for &c in &col_idx[row_ptr[r]..row_ptr[r + 1]] {
                row_idx[fill[c]] = r;
                fill[c] += 1;
            }
        }
        SparseInteractionMatrix {
            row_ids,
            col_ids,
            row_lookup,
            col_lookup,
            row_ptr,
            col_idx,
            col_ptr,
            row_idx,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices of row `r`, ascending.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Row indices of column `c`, ascending.
    pub fn col(&self, c: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]]
    }

    pub fn row_id(&self, r: usize) -> &str {
        &self.row_ids[r]
    }

    pub fn col_id(&self, c: usize) -> &str {
        &self.col_ids[c]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_lookup.get(id).copied()
    }

    pub fn col_of(&self, id: &str) -> Option<usize> {
        self.col_lookup.get(id).copied()
    }

    pub fn contains(&self, row: &str, col: &str) -> bool {
        match (self.row_of(row), self.col_of(col)) {
            (Some(r), Some(c)) => self.row(r).binary_search(&c).is_ok(),
            _ => false,
        }
    }

    pub fn col_count(&self, c: usize) -> usize {
        self.col_ptr[c + 1] - self.col_ptr[c]
    }

    pub fn row_count(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }
}

/// Matrix of one indicator in an event log: actors as rows, targets as
/// columns.
pub fn build_interaction_matrix(log: &EventLog, indicator: &str) -> Result<SparseInteractionMatrix> {
    let pairs = log.indicator(indicator)?;
    Ok(SparseInteractionMatrix::from_pairs(
        pairs.iter().map(|(a, t)| (a.as_str(), t.as_str())),
    ))
}
