use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs.
pub const PROB_EPSILON: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `probs`.
pub fn bce_loss<T: Scalar>(probs: &[T], labels: &[T]) -> Result<(T, Vec<T>)> {
    if probs.is_empty() {
        return Err(invalid!("binary cross-entropy of an empty batch"));
    }
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let eps = T::lit(PROB_EPSILON);
    let hi = T::one() - eps;
    let n = T::from_usize_lossy(probs.len());
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        if !p.is_finite() {
            return Err(Error::NonFinite("probability passed to bce_loss".into()));
        }
        if y != T::zero() && y != T::one() {
            return Err(invalid!("label {y} is not 0 or 1"));
        }
        let pc = p.max(eps).min(hi);
        total -= y * pc.ln() + (T::one() - y) * (T::one() - pc).ln();
        let g = if p < eps || p > hi {
            T::zero()
        } else {
            (-y / pc + (T::one() - y) / (T::one() - pc)) / n
        };
        grad.push(g);
    }
    Ok((total / n, grad))
}
