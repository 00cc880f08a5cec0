//! Dense matrices, a small softmax MLP, losses and optimisers.

pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod optim;

pub use gradcheck::{cosine_similarity, finite_diff_grad, relative_error};
pub use loss::{backward_ce, backward_kl, cross_entropy, kl_divergence, LOG_FLOOR};
pub use matrix::Matrix;
pub use mlp::{forward, Activation, ActivationCache, DenseLayer, GradSet, MlpSpec, ParamSet, SoftmaxOutput};
pub use optim::{momentum_step, sgd_step, MomentumOptState};
