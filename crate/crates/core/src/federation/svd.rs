//! Randomized truncated SVD of sparse and dense matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cco::matrix::SparseInteractionMatrix;
use crate::error::{invalid, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

pub const DEFAULT_RANK: usize = 50;
pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const MIN_POWER_ITERS: usize = 5;

/// A matrix known only through products with dense blocks.
pub trait LinearOperator<T: Scalar> {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `A·x` for `x` of shape `cols × k`.
    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    /// `Aᵀ·y` for `y` of shape `rows × k`.
    fn apply_t(&self, y: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Scalar> LinearOperator<T> for Tensor<T> {
    fn rows(&self) -> usize {
        Tensor::rows(self)
    }

    fn cols(&self) -> usize {
        Tensor::cols(self)
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.matmul(x)
    }

    fn apply_t(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.matmul_tn(y)
    }
}

/// The 0/1 interaction matrix, rows = actors and columns = targets.
impl<T: Scalar> LinearOperator<T> for SparseInteractionMatrix {
    fn rows(&self) -> usize {
        SparseInteractionMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        SparseInteractionMatrix::cols(self)
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rows() != SparseInteractionMatrix::cols(self) {
            return Err(crate::Error::Shape(format!("{} columns times {} rows", SparseInteractionMatrix::cols(self), x.rows())));
        }
        let mut out = Tensor::zeros(SparseInteractionMatrix::rows(self), x.cols());
        for r in 0..SparseInteractionMatrix::rows(self) {
            let dst = out.row_mut(r);
            for &c in self.row(r) {
                for (o, &v) in dst.iter_mut().zip(x.row(c)) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    fn apply_t(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        if y.rows() != SparseInteractionMatrix::rows(self) {
            return Err(crate::Error::Shape(format!("{} rows times {} rows", SparseInteractionMatrix::rows(self), y.rows())));
        }
        let mut out = Tensor::zeros(SparseInteractionMatrix::cols(self), y.cols());
        for c in 0..SparseInteractionMatrix::cols(self) {
            let dst = out.row_mut(c);
            for &r in self.col(c) {
                for (o, &v) in dst.iter_mut().zip(y.row(r)) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }
}

/// `A ≈ U·diag(s)·Vᵀ` with singular values in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd<T> {
    pub u: Tensor<T>,
    pub s: Vec<T>,
    pub v: Tensor<T>,
}

impl<T: Scalar> TruncatedSvd<T> {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Rows of `U·diag(s)`: one embedding per matrix row.
    pub fn row_embeddings(&self) -> Tensor<T> {
        let mut out = self.u.clone();
        for r in 0..out.rows() {
            for (x, &s) in out.row_mut(r).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        out
    }

    /// `U·diag(s)·Vᵀ` restricted to the leading `rank` triplets.
    pub fn reconstruct(&self, rank: usize) -> Result<Tensor<T>> {
        let rank = rank.min(self.rank());
        self.row_embeddings().col_block(0, rank).matmul_nt(&self.v.col_block(0, rank))
    }
}

/// Modified Gram–Schmidt with one re-orthogonalisation pass. Columns that
/// vanish against the earlier ones are set to zero.
fn orthonormalize<T: Scalar>(a: &mut Tensor<T>) {
    let (m, k) = a.shape();
    let scale = a.frobenius_norm().max(T::min_positive_value());
    let tiny = scale * T::epsilon() * T::from_usize_lossy(m.max(k));
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let dot = (0..m).map(|r| a.get(r, i) * a.get(r, j)).sum::<T>();
                for r in 0..m {
                    let v = a.get(r, j) - dot * a.get(r, i);
                    a.set(r, j, v);
                }
            }
        }
        let norm = (0..m).map(|r| a.get(r, j).powi(2)).sum::<T>().sqrt();
        for r in 0..m {
            let v = if norm > tiny { a.get(r, j) / norm } else { T::zero() };
            a.set(r, j, v);
        }
    }
}

/// One-sided Jacobi on the columns of `a` (`m × k`). Returns `(w, v)`
/// with `a·v = w`, `w` having mutually orthogonal columns and `v`
/// orthogonal.
fn one_sided_jacobi<T: Scalar>(mut w: Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (m, k) = w.shape();
    let mut v = Tensor::identity(k);
    let tol = T::epsilon() * T::from_usize_lossy(m.max(1));
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for r in 0..m {
                    let (x, y) = (w.get(r, p), w.get(r, q));
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let (x, y) = (w.get(r, p), w.get(r, q));
                    w.set(r, p, c * x - s * y);
                    w.set(r, q, s * x + c * y);
                }
                for r in 0..k {
                    let (x, y) = (v.get(r, p), v.get(r, q));
                    v.set(r, p, c * x - s * y);
                    v.set(r, q, s * x + c * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (w, v)
}

/// Leading `rank` singular triplets by randomized subspace iteration with
/// `rank + oversample` probe vectors and at least [`MIN_POWER_ITERS`]
/// power iterations.
pub fn truncated_svd<T: Scalar, A: LinearOperator<T> + ?Sized>(
    a: &A,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<TruncatedSvd<T>> {
    let (m, n) = (a.rows(), a.cols());
    if rank == 0 || rank > m.min(n) {
        return Err(invalid!("rank {rank} outside 1..={} for a {m}×{n} matrix", m.min(n)));
    }
    let width = (rank + oversample).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Tensor::<T>::random_normal(n, width, 1.0, &mut rng);
    let mut q = a.apply(&omega)?;
    orthonormalize(&mut q);
    for _ in 0..power_iters.max(MIN_POWER_ITERS) {
        let mut z = a.apply_t(&q)?;
        orthonormalize(&mut z);
        q = a.apply(&z)?;
        orthonormalize(&mut q);
    }
    // Bᵀ = Aᵀ·Q is n × width; its right singular vectors are B's left ones.
    let bt = a.apply_t(&q)?;
    let (w, vb) = one_sided_jacobi(bt);
    let norms: Vec<T> = (0..width).map(|j| (0..n).map(|r| w.get(r, j).powi(2)).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y)));
    order.truncate(rank);

    let ub = q.matmul(&vb)?;
    let mut u = Tensor::zeros(m, rank);
    let mut v = Tensor::zeros(n, rank);
    let mut s = Vec::with_capacity(rank);
    for (dst, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        for r in 0..m {
            u.set(r, dst, ub.get(r, j));
        }
        if sigma > T::zero() {
            for r in 0..n {
                v.set(r, dst, w.get(r, j) / sigma);
            }
        }
    }
    Ok(TruncatedSvd { u, s, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi.
    fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (x, y) = (a[k][p], a[k][q]);
                        a[k][p] = c * x - s * y;
                        a[k][q] = s * x + c * y;
                    }
                    for k in 0..n {
                        let (x, y) = (a[p][k], a[q][k]);
                        a[p][k] = c * x - s * y;
                        a[q][k] = s * x + c * y;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
        ev
    }

    #[test]
    fn diagonal_singular_values() {
        let a = Tensor::<f64>::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let svd = truncated_svd::<f64, _>(&a, 3, DEFAULT_OVERSAMPLE, 5, 1).unwrap();
        for (got, want) in svd.s.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", svd.s);
        }
        assert!(svd.reconstruct(3).unwrap().max_abs_diff(&a).unwrap() < 1e-12);
    }

    #[test]
    fn rank_one_is_recovered_exactly() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let y = [2.0, 1.0, -1.0];
        let a = Tensor::from_fn(4, 3, |r, c| x[r] * y[c]);
        let svd = truncated_svd(&a, 1, DEFAULT_OVERSAMPLE, 5, 3).unwrap();
        assert!(svd.reconstruct(1).unwrap().max_abs_diff(&a).unwrap() < 1e-8);
    }

    #[test]
    fn random_dense_matches_jacobi_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = Tensor::<f64>::from_fn(50, 40, |_, _| rng.random_range(-1.0..1.0));
        let ata = a.matmul_tn(&a).unwrap();
        let rows: Vec<Vec<f64>> = (0..40).map(|r| ata.row(r).to_vec()).collect();
        let oracle: Vec<f64> = symmetric_eigenvalues(rows).into_iter().map(|e| e.max(0.0).sqrt()).collect();
        let svd = truncated_svd(&a, 5, DEFAULT_OVERSAMPLE, 60, 2).unwrap();
        for (got, want) in svd.s.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn sparse_operator_matches_dense_and_rank_guard() {
        let m = SparseInteractionMatrix::from_pairs([("u1", "a"), ("u1", "b"), ("u2", "b"), ("u3", "c"), ("u3", "a")]);
        let dense = Tensor::<f64>::from_fn(3, 3, |r, c| if m.row(r).contains(&c) { 1.0 } else { 0.0 });
        let x = Tensor::from_fn(3, 2, |r, c| (r * 2 + c) as f64 - 1.5);
        assert_eq!(LinearOperator::<f64>::apply(&m, &x).unwrap(), dense.matmul(&x).unwrap());
        assert_eq!(LinearOperator::<f64>::apply_t(&m, &x).unwrap(), dense.matmul_tn(&x).unwrap());
        assert!(truncated_svd::<f64, _>(&m, 4, 0, 5, 0).is_err());
        assert!(truncated_svd::<f64, _>(&m, 0, 0, 5, 0).is_err());
    }

    #[test]
    fn reconstruction_error_does_not_grow_with_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Tensor::<f64>::from_fn(30, 20, |r, c| 1.0 / (1.0 + r as f64 + c as f64) + 0.01 * rng.random_range(-1.0..1.0));
        let svd = truncated_svd(&a, 10, DEFAULT_OVERSAMPLE, 20, 9).unwrap();
        let mut last = f64::INFINITY;
        for r in 1..=10 {
            let err = svd.reconstruct(r).unwrap().sub(&a).unwrap().frobenius_norm();
            assert!(err <= last + 1e-12, "rank {r}: {err} > {last}");
            last = err;
        }
    }
}
