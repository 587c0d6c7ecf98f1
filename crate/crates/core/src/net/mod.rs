//! Minimal differentiable core: dense networks with explicit reverse-mode
//! backward passes, the losses the agents need, and optimizers. Double
//! precision throughout.

pub mod gradcheck;
mod layers;
pub mod loss;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use layers::{Activation, Dense, Mlp, MlpTape};
pub use loss::{huber_grad, huber_loss, log_softmax, quantile_huber, softmax, softmax_cross_entropy, NORMALIZATION_TOLERANCE};
pub use optim::{OptimizerConfig, OptimizerState};
pub use params::ParameterSet;
pub use tensor::Tensor;
