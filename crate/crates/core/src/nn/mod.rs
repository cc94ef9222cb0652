//! Network kernel: the handful of differentiable operations this model
//! needs, each with a hand-written backward pass, plus the finite-difference
//! oracle used to verify them.

pub mod activ;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod pool;

pub use activ::{leaky_relu, sigmoid, softmax};
pub use conv::{conv2d, conv2d_backward, conv2d_forward, conv2d_linear, ConvCache, ConvParams};
pub use dense::{dense, dense_cols, dense_cols_backward, DenseParams};
pub use gradcheck::{finite_diff_grad, max_rel_error, rel_error, ParamTensors, DEFAULT_EPS};
pub use gru::{bigru, bigru_backward, bigru_forward, gru_step, BigruCache, GruParams};
pub use pool::{maxpool, maxpool_backward, maxpool_forward, PoolCache};
