//! Size-weighted parameter averaging, zero-sum masking noise and the
//! client-side training step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ctr::model::CtrModel;
use crate::ctr::train::train_epochs;
use crate::data::ctr::Sample;
use crate::error::{invalid, Error, Result};
use crate::nn::optim::OptimizerConfig;
use crate::nn::params::ParameterSet;
use crate::scalar::Scalar;

fn check_clients<T: Scalar>(clients: &[ParameterSet<T>], sizes: &[usize]) -> Result<usize> {
    if clients.is_empty() {
        return Err(invalid!("no clients to aggregate"));
    }
    if clients.len() != sizes.len() {
        return Err(invalid!("{} parameter sets but {} sizes", clients.len(), sizes.len()));
    }
    if let Some(k) = clients.iter().position(|c| !c.same_structure(&clients[0])) {
        return Err(Error::Shape(format!("client {k} parameters differ in structure from client 0")));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(invalid!("client sizes sum to zero"));
    }
    Ok(total)
}

/// `Σ_k (n_k / n)·w_k` over the groups named in `plan`; the result holds
/// only those groups.
pub fn fedavg_aggregate<T: Scalar>(clients: &[ParameterSet<T>], sizes: &[usize], plan: &[&str]) -> Result<ParameterSet<T>> {
    let total = check_clients(clients, sizes)?;
    let weights: Vec<T> = sizes.iter().map(|&n| T::from_usize_lossy(n) / T::from_usize_lossy(total)).collect();
    let mut out = clients[0].subset(plan);
    for group in out.groups_mut() {
        for (t, param) in group.params.iter_mut().enumerate() {
            param.grad.fill(T::zero());
            let dst = param.value.as_mut_slice();
            dst.fill(T::zero());
            for (client, &w) in clients.iter().zip(&weights) {
                let src = client.group(&group.name).expect("same structure").params[t].value.as_slice();
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(out)
}

/// Adds per-client Gaussian noise to the `plan` groups, centred so that its
/// size-weighted sum is zero and the aggregate is unchanged.
pub fn zero_sum_noise<T: Scalar>(clients: &mut [ParameterSet<T>], sizes: &[usize], plan: &[&str], sigma: f64, seed: u64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid!("noise sigma {sigma} must be finite and non-negative"));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    if clients.len() < 2 {
        return Err(invalid!("zero-sum noise needs at least two clients"));
    }
    let total = check_clients(clients, sizes)?;
    let weights: Vec<T> = sizes.iter().map(|&n| T::from_usize_lossy(n) / T::from_usize_lossy(total)).collect();
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid!("{e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<String> = clients[0].group_names().into_iter().filter(|g| plan.contains(g)).map(String::from).collect();
    for g in &groups {
        let tensors = clients[0].group(g).expect("group").params.len();
        for t in 0..tensors {
            let len = clients[0].group(g).expect("group").params[t].value.len();
            let mut noise: Vec<Vec<T>> = (0..clients.len()).map(|_| (0..len).map(|_| T::lit(normal.sample(&mut rng))).collect()).collect();
            for i in 0..len {
                let mean: T = noise.iter().zip(&weights).map(|(eta, &w)| w * eta[i]).sum();
                for eta in noise.iter_mut() {
                    eta[i] -= mean;
                }
            }
            for (client, eta) in clients.iter_mut().zip(&noise) {
                let dst = client.group_mut(g).expect("group").params[t].value.as_mut_slice();
                for (d, &e) in dst.iter_mut().zip(eta) {
                    *d += e;
                }
            }
        }
    }
    Ok(())
}

/// Local training schedule of one client per round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

/// Loads the client's own parameters, overwrites the broadcast groups with
/// `global`, trains with a fresh optimiser and returns the full parameters.
pub fn local_update<T: Scalar>(
    model: &mut dyn CtrModel<T>,
    client_state: &ParameterSet<T>,
    global: &ParameterSet<T>,
    train: &[Sample],
    cfg: &LocalConfig,
    seed: u64,
) -> Result<ParameterSet<T>> {
    if train.is_empty() {
        return Err(invalid!("client has no training samples"));
    }
    model.params_mut().load_groups(client_state)?;
    model.params_mut().load_groups(global)?;
    let mut optimizer = cfg.optimizer.build::<T>();
    train_epochs(model, train, &mut optimizer, cfg.batch_size, cfg.epochs, seed)?;
    Ok(model.params().clone())
}
