//! Layer vocabulary: rescale, valid convolution, ReLU, pooling, flatten,
//! fully connected, softmax and residual blocks, each with forward and
//! gradient rules.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod model;
pub mod pool;
pub mod residual;

pub use activation::{relu, relu_backward, rescale_backward, rescale_forward, softmax, softmax_backward};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, KernelSpec};
pub use dense::{dense_backward, dense_forward, flatten, DenseGrads, DenseParams};
pub use model::{Backward, Gradients, Layer, LayerNode, Model, Trace};
pub use pool::{pool_backward, pool_forward, PoolMode, PoolOp};
pub use residual::ResidualBlock;
