//! Differentiable layer primitives, each with a forward and an analytic backward rule.

pub mod activation;
pub mod conv;
pub mod loss;
pub mod norm;
pub mod pool;

pub use activation::{activate, activate_grad, ActivationKind, DEFAULT_ALPHA};
pub use conv::{
    add_channel_bias, conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward,
    ConvGrads,
};
pub use loss::{categorical_cross_entropy, one_hot, softmax, softmax_backward, LossOutput};
pub use norm::{batch_norm, batch_norm_backward, dropout, BatchNormCache, RunningStats};
pub use pool::{
    avg_pool2d, avg_pool2d_backward, max_pool2d, max_pool2d_backward, min_pool2d,
    unpool_backward, unpool_with_indices, PoolIndices,
};
