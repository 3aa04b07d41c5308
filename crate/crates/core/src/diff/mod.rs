//! Differentiable building blocks with hand-written backward passes.
//!
//! Every forward function has a matching `*_backward` that consumes the saved
//! inputs (or an explicit cache) and returns the gradient with respect to its
//! input, accumulating parameter gradients into the owning [`ParamBlock`].

mod batch_norm;
mod grad_check;
mod ops;
mod sparsemax;
mod tensor;

pub use batch_norm::{batch_norm, batch_norm_backward, BnCache, BnState, Mode};
pub use grad_check::{grad_check, GradCheckOptions, GradReport};
pub use ops::{
    glu, glu_backward, linear_backward, linear_forward, relu, relu_backward, sigmoid,
    softmax_cross_entropy, softmax_rows, ParamBlock,
};
pub use sparsemax::{
    sparsemax, sparsemax_backward, sparsemax_rows, sparsemax_rows_backward, threshold,
};
pub use tensor::Tensor2;
