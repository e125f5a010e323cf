//! Dunning's log-likelihood ratio on 2×2 contingency tables.

use crate::error::{invalid, Result};

#[inline]
fn cell(k: f64, row: f64, col: f64, n: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * ((k * n) / (row * col)).ln()
    }
}

/// G² statistic `2·Σ k_ij·ln(k_ij·N / (R_i·C_j))` with `0·ln 0 = 0`.
///
/// `k11` counts actors with both events, `k12` the first event only, `k21`
/// the second only and `k22` neither. An all-zero table scores 0.
pub fn llr(k11: i64, k12: i64, k21: i64, k22: i64) -> Result<f64> {
    if k11 < 0 || k12 < 0 || k21 < 0 || k22 < 0 {
        return Err(invalid!("negative count in contingency table ({k11}, {k12}, {k21}, {k22})"));
    }
    let [a, b, c, d] = [k11, k12, k21, k22].map(|k| k as f64);
    let n = a + b + c + d;
    if n == 0.0 {
        return Ok(0.0);
    }
    let (r1, r2) = (a + b, c + d);
    let (c1, c2) = (a + c, b + d);
    let sum = cell(a, r1, c1, n) + cell(b, r1, c2, n) + cell(c, r2, c1, n) + cell(d, r2, c2, n);
    Ok((2.0 * sum).max(0.0))
}
