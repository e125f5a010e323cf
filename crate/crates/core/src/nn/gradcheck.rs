//! Finite-difference verification of hand-written backward passes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::params::ParameterSet;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Anything with parameters, a scalar loss and an analytic gradient.
pub trait Differentiable<T: Scalar> {
    fn parameters(&self) -> &ParameterSet<T>;
    fn parameters_mut(&mut self) -> &mut ParameterSet<T>;
    /// Loss at the current parameters. Must be deterministic.
    fn loss(&mut self) -> Result<T>;
    /// Loss, with gradients written into the parameter set.
    fn loss_and_grad(&mut self) -> Result<T>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub coords_per_group: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            coords_per_group: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub worst: Option<String>,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients with central differences on a random subsample
/// of at least `coords_per_group` coordinates per group (all of them when the
/// group is smaller).
pub fn gradient_check<T: Scalar, M: Differentiable<T> + ?Sized>(
    model: &mut M,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    model.parameters_mut().zero_grad();
    let base = model.loss_and_grad()?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at gradient-check point".into()));
    }
    let analytic = model.parameters().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = T::lit(cfg.step);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
        passed: true,
    };
    for (gi, group) in analytic.groups().iter().enumerate() {
        // Flatten (tensor, offset) coordinates across the group.
        let coords: Vec<(usize, usize)> = group
            .params
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| (0..p.value.len()).map(move |o| (pi, o)))
            .collect();
        let picks: Vec<usize> = if coords.len() <= cfg.coords_per_group {
            (0..coords.len()).collect()
        } else {
            sample(&mut rng, coords.len(), cfg.coords_per_group).into_vec()
        };
        for idx in picks {
            let (pi, off) = coords[idx];
            let original = group.params[pi].value.as_slice()[off];
            let set = model.parameters_mut();
            set.groups_mut()[gi].params[pi].value.as_mut_slice()[off] = original + h;
            let plus = model.loss()?;
            model.parameters_mut().groups_mut()[gi].params[pi].value.as_mut_slice()[off] = original - h;
            let minus = model.loss()?;
            model.parameters_mut().groups_mut()[gi].params[pi].value.as_mut_slice()[off] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("perturbed loss".into()));
            }
            let numeric = ((plus - minus) / (h + h)).as_f64();
            let a = group.params[pi].grad.as_slice()[off].as_f64();
            let err = relative_error(a, numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(format!(
                    "{}/{}[{off}]: analytic {a:e} vs numeric {numeric:e}",
                    group.name, group.params[pi].name
                ));
            }
        }
    }
    report.passed = report.max_rel_error <= cfg.tolerance;
    Ok(report)
}

/// Central-difference gradient of `f` at `x`, every coordinate.
pub fn numeric_gradient<T: Scalar>(x: &Tensor<T>, step: f64, f: impl Fn(&Tensor<T>) -> T) -> Tensor<T> {
    let h = T::lit(step);
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let original = probe.as_slice()[i];
        probe.as_mut_slice()[i] = original + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = original - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = original;
        grad.as_mut_slice()[i] = (plus - minus) / (h + h);
    }
    grad
}
