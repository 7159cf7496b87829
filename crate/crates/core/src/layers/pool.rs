use alloc::vec::Vec;

use super::missing_cache;
use crate::error::Result;
use crate::tensor::{maxpool2d, maxpool2d_backward};
use crate::Tensor;

#[derive(Debug, Clone, Default)]
pub struct MaxPool {
    argmax: Vec<u32>,
    input_shape: Option<Vec<usize>>,
}

impl MaxPool {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let pooled = maxpool2d(x)?;
        self.argmax = pooled.argmax;
        self.input_shape = Some(x.shape().to_vec());
        Ok(pooled.output)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or_else(|| missing_cache("maxpool_backward"))?;
        maxpool2d_backward(grad_out, &self.argmax, shape)
    }
}
