use super::{missing_cache, Param};
use crate::error::Result;
use crate::tensor::{conv2d, conv2d_backward};
use crate::{Rng, Tensor};

/// 3×3 same-padded convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    /// First layers skip the input gradient nobody consumes.
    pub propagate_input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    /// He-normal kernels (`std = sqrt(2 / (cin·9))`), zero bias.
    pub fn new(cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let std = crate::math::sqrt(2.0 / (cin * 9) as f64);
        let weight = Tensor::from_fn(&[cout, cin, 3, 3], |_| (rng.normal() * std) as f32);
        Self::from_params(weight, Tensor::zeros(&[cout]))
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Self {
        Self { weight: Param::new(weight), bias: Param::new(bias), propagate_input_grad: true, input: None }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d(x, &self.weight.value, &self.bias.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Returns the input gradient, `None` when `propagate_input_grad` is off.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Option<Tensor>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("conv2d_backward"))?;
        let grads = conv2d_backward(x, &self.weight.value, grad_out, self.propagate_input_grad)?;
        accumulate(&mut self.weight.grad, &grads.kernels);
        accumulate(&mut self.bias.grad, &grads.bias);
        Ok(grads.input)
    }
}

fn accumulate(into: &mut Tensor, g: &Tensor) {
    into.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
}
