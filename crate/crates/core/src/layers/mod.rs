//! Layers with explicit forward and backward passes.
//!
//! Every trainable layer owns its [`Param`]s; `backward` accumulates into
//! `Param::grad` and returns the gradient with respect to the layer input.
//! Values needed by `backward` are cached by the preceding `forward`.

mod activation;
pub mod audit;
mod conv;
mod dense;
mod input;
mod loss;
mod norm;
mod pool;

use crate::Tensor;

pub use activation::{relu, relu_backward, Relu};
pub use conv::Conv2d;
pub use dense::Dense;
pub use input::{
    custom_channel_dropout, grayscale_concat, ChannelDropout, CustomDropoutConfig, GrayscaleConcat, EQUAL_GRAY_WEIGHTS,
};
pub use loss::{softmax_cross_entropy, SoftmaxCrossEntropy};
pub use norm::{Norm, NormKind, BN_MOMENTUM, NORM_EPS};
pub use pool::MaxPool;

/// Whether a forward pass is part of a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

pub(crate) fn missing_cache(op: &'static str) -> crate::Error {
    crate::Error::Dimension { op, detail: "backward called without a preceding forward".into() }
}
