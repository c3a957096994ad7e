//! Dense-network numerical core: forward/backward passes, Adam, polyak
//! averaging and the squashed Gaussian used by SAC.

mod adam;
pub mod checkpoint;
mod gaussian;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState, ScalarAdam};
pub use gaussian::{
    clamp_log_std, log_tanh_jacobian, softplus, squashed_gaussian_sample, squashed_log_prob,
    SquashedSample, ACTION_LIMIT, LOG_STD_MAX, LOG_STD_MIN,
};
pub use matrix::Matrix;
pub use mlp::{polyak_update, Activation, ForwardTrace, GradBundle, Layer, LayerGrad, NetParams};
