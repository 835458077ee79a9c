//! Float64 layer kernels with forward and backward passes.

mod gradcheck;
mod kernels;
mod layer;
mod sequential;
mod tensor;

pub use gradcheck::{
    finite_difference_check, relative_error, GradCheckReport, Parameterized, GRAD_FLOOR,
};
pub use kernels::{
    causal_conv1d_backward, causal_conv1d_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, maxpool2d_backward, maxpool2d_forward, residual_block_backward,
    residual_block_forward,
};
pub use layer::{
    CausalConv1d, Conv2d, Dense, Init, Layer, LayerCache, LayerKind, LayerSpec, MaxPool2d, Padding,
    ResidualBlock,
};
pub use sequential::Sequential;
pub use tensor::Tensor;
