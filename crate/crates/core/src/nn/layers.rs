//! Layer kernels with hand-written backward passes.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Gradients returned by [`affine_backward`].
#[derive(Clone, Debug)]
pub struct AffineGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `y = x·W + b` for `x: n×in`, `W: in×out`, `b: 1×out`.
pub fn affine_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut y = x.matmul(w)?;
    y.add_row_broadcast(b)?;
    Ok(y)
}

pub fn affine_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<AffineGrads<T>> {
    if dy.rows() != x.rows() || dy.cols() != w.cols() {
        return Err(Error::Shape(format!(
            "affine backward: dy {}x{} for x {}x{}, W {}x{}",
            dy.rows(),
            dy.cols(),
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        )));
    }
    Ok(AffineGrads {
        input: dy.matmul_nt(w)?,
        weight: x.matmul_tn(dy)?,
        bias: dy.sum_rows(),
    })
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// `x` is the pre-activation input.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::Shape("relu backward".into()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.rows(), x.cols(), data)
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// `y` is the sigmoid output.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != dy.shape() {
        return Err(Error::Shape("sigmoid backward".into()));
    }
    let data = y
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::from_vec(y.rows(), y.cols(), data)
}

/// Numerically stable softmax applied to each row.
pub fn softmax_rowwise<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Backward of [`softmax_rowwise`] given its output `y`.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != dy.shape() {
        return Err(Error::Shape("softmax backward".into()));
    }
    let mut dx = Tensor::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), dy.row(r));
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for ((d, &s), &g) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *d = s * (g - dot);
        }
    }
    Ok(dx)
}

/// Inverted dropout. Returns the output and, in training mode, the scaled
/// keep-mask needed by [`dropout_backward`].
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    mask_prob: f64,
    train: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(0.0..1.0).contains(&mask_prob) {
        return Err(invalid!("dropout probability {mask_prob} outside [0, 1)"));
    }
    if !train || mask_prob == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - mask_prob));
    let mask = Tensor::from_fn(x.rows(), x.cols(), |_, _| {
        if rng.random::<f64>() < mask_prob {
            T::zero()
        } else {
            keep
        }
    });
    let y = x.hadamard(&mask)?;
    Ok((y, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(mask: Option<&Tensor<T>>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    match mask {
        Some(m) => dy.hadamard(m),
        None => Ok(dy.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::numeric_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) > 0.0 || sigmoid(-800.0f64) == 0.0);
        assert!(sigmoid(40.0f64) <= 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::random_normal(20, 7, 5.0, &mut rng);
        let y = softmax_rowwise(&x);
        for r in 0..y.rows() {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_train_rescales() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f64>::from_fn(50, 40, |_, _| 1.0);
        let (y, mask) = dropout(&x, 0.3, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, mask) = dropout(&x, 0.3, true, &mut rng).unwrap();
        assert!(mask.is_some());
        let keep = 1.0 / 0.7;
        assert!(y.as_slice().iter().all(|&v| v == 0.0 || (v - keep).abs() < 1e-15));
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
    }

    // Each backward pass is compared against central differences of a
    // random linear functional L = Σ g ⊙ f(x).
    fn check_unary(f: impl Fn(&Tensor<f64>) -> Tensor<f64>, back: impl Fn(&Tensor<f64>, &Tensor<f64>, &Tensor<f64>) -> Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::random_normal(4, 5, 1.0, &mut rng);
        let g = Tensor::<f64>::random_normal(4, 5, 1.0, &mut rng);
        let y = f(&x);
        let analytic = back(&x, &y, &g);
        let numeric = numeric_gradient(&x, 1e-4, |xp| f(xp).hadamard(&g).unwrap().sum());
        for (a, n) in analytic.as_slice().iter().zip(numeric.as_slice()) {
            assert!(rel_err(*a, *n) <= 1e-4, "{a} vs {n}");
        }
    }

    #[test]
    fn sigmoid_gradient() {
        check_unary(sigmoid_forward, |_, y, g| sigmoid_backward(y, g).unwrap());
    }

    #[test]
    fn softmax_gradient() {
        check_unary(softmax_rowwise, |_, y, g| softmax_backward(y, g).unwrap());
    }

    #[test]
    fn relu_gradient_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::random_normal(4, 5, 1.0, &mut rng)
            .map(|v| if v.abs() < 1e-2 { 0.5 } else { v });
        let g = Tensor::<f64>::random_normal(4, 5, 1.0, &mut rng);
        let analytic = relu_backward(&x, &g).unwrap();
        let numeric = numeric_gradient(&x, 1e-4, |xp| relu_forward(xp).hadamard(&g).unwrap().sum());
        for (a, n) in analytic.as_slice().iter().zip(numeric.as_slice()) {
            assert!(rel_err(*a, *n) <= 1e-4);
        }
    }

    #[test]
    fn affine_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f64>::random_normal(3, 4, 1.0, &mut rng);
        let w = Tensor::<f64>::random_normal(4, 2, 1.0, &mut rng);
        let b = Tensor::<f64>::random_normal(1, 2, 1.0, &mut rng);
        let g = Tensor::<f64>::random_normal(3, 2, 1.0, &mut rng);
        let grads = affine_backward(&x, &w, &g).unwrap();
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
            affine_forward(x, w, b).unwrap().hadamard(&g).unwrap().sum()
        };
        let nx = numeric_gradient(&x, 1e-4, |xp| loss(xp, &w, &b));
        let nw = numeric_gradient(&w, 1e-4, |wp| loss(&x, wp, &b));
        let nb = numeric_gradient(&b, 1e-4, |bp| loss(&x, &w, bp));
        for (analytic, numeric) in [(&grads.input, &nx), (&grads.weight, &nw), (&grads.bias, &nb)] {
            for (a, n) in analytic.as_slice().iter().zip(numeric.as_slice()) {
                assert!(rel_err(*a, *n) <= 1e-4, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn affine_shape_errors() {
        let x = Tensor::<f64>::zeros(2, 3);
        let w = Tensor::<f64>::zeros(4, 2);
        let b = Tensor::<f64>::zeros(1, 2);
        assert!(affine_forward(&x, &w, &b).is_err());
    }
}
