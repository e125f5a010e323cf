//! k-means with k-means++ seeding and Lloyd iterations.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<T> {
    /// Cluster of each point.
    pub assignments: Vec<usize>,
    /// `K × d`.
    pub centroids: Tensor<T>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: T,
    pub iterations: usize,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the
/// lower index.
fn nearest<T: Scalar>(point: &[T], centroids: &Tensor<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<T: Scalar>(points: &Tensor<T>, k: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = points.rows();
    let mut centroids = Tensor::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0)).as_f64()).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // Every point coincides with a chosen centroid.
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)).as_f64());
        }
    }
    centroids
}

/// Partitions the rows of `points` into `k` clusters.
///
/// Stops at an assignment fixpoint or after `max_iters` Lloyd steps. A
/// cluster left empty takes over the point farthest from its centroid, or
/// stays empty when every point sits on its centroid up to rounding.
pub fn kmeans<T: Scalar>(points: &Tensor<T>, k: usize, max_iters: usize, seed: u64) -> Result<KMeans<T>> {
    let (n, d) = points.shape();
    if k == 0 {
        return Err(invalid!("k must be positive"));
    }
    if n < k {
        return Err(invalid!("{n} points cannot form {k} clusters"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let scale = (0..n).map(|i| points.row(i).iter().map(|&x| x * x).sum::<T>()).fold(T::zero(), T::max);
    let negligible = scale * T::epsilon() * T::from_usize_lossy(4 * d.max(1));
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![T::zero(); n];
        for i in 0..n {
            let (c, dd) = nearest(points.row(i), &centroids);
            dist[i] = dd;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &c in &assignments {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1 && dist[i] > negligible)
                .max_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                assignments[i] = c;
                counts[c] = 1;
                dist[i] = T::zero();
                changed = true;
            }
        }
        let mut sums = Tensor::<T>::zeros(k, d);
        for (i, &c) in assignments.iter().enumerate() {
            for (s, &x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in (0..k).filter(|&c| counts[c] > 0) {
            let q = T::from_usize_lossy(counts[c]);
            for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / q;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points.row(i), centroids.row(assignments[i]))).sum();
    Ok(KMeans {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    #[test]
    fn separated_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let pts = Tensor::<f64>::from_fn(40, 2, |r, _| if r < 20 { 0.0 } else { 100.0 } + noise.sample(&mut rng));
        let km = kmeans(&pts, 2, DEFAULT_MAX_ITERS, 1).unwrap();
        let a = km.assignments[0];
        assert!(km.assignments[..20].iter().all(|&c| c == a));
        assert!(km.assignments[20..].iter().all(|&c| c != a));
    }

    #[test]
    fn one_cluster_per_point_has_zero_inertia() {
        let pts = Tensor::<f64>::from_fn(6, 3, |r, c| (r * r + c) as f64);
        let km = kmeans(&pts, 6, DEFAULT_MAX_ITERS, 0).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut seen = km.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_points_do_not_crash() {
        let pts = Tensor::<f64>::from_fn(8, 2, |_, _| 1.5);
        let km = kmeans(&pts, 3, DEFAULT_MAX_ITERS, 0).unwrap();
        assert_eq!(km.inertia, 0.0);
        assert_eq!(km, kmeans(&pts, 3, DEFAULT_MAX_ITERS, 0).unwrap());
        assert!(kmeans(&pts, 9, DEFAULT_MAX_ITERS, 0).is_err());
        assert!(kmeans(&pts, 0, DEFAULT_MAX_ITERS, 0).is_err());
    }
}
