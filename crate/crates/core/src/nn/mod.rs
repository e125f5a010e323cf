//! Minimal dense numerical substrate: tensors, layer kernels, losses,
//! optimisers, parameter groups and gradient checking.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{gradient_check, Differentiable, GradCheckConfig, GradCheckReport};
pub use layers::{
    affine_backward, affine_forward, dropout, dropout_backward, relu_backward, relu_forward, sigmoid,
    sigmoid_backward, sigmoid_forward, softmax_backward, softmax_rowwise, AffineGrads,
};
pub use loss::{bce_loss, PROB_EPSILON};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, Optimizer, OptimizerConfig};
pub use params::{Checkpoint, Param, ParamId, ParameterGroup, ParameterSet};
pub use tensor::Tensor;
