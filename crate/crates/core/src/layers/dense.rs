use alloc::format;
use alloc::vec;

use super::{missing_cache, Param};
use crate::error::{dim_err, Result};
use crate::tensor::{gemm, Transpose};
use crate::{Rng, Tensor};

/// Fully connected layer `y = x·W + b` with `W: [din, dout]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    /// He-normal weights (`std = sqrt(2 / din)`), zero bias.
    pub fn new(din: usize, dout: usize, rng: &mut Rng) -> Self {
        let std = crate::math::sqrt(2.0 / din as f64);
        let weight = Tensor::from_fn(&[din, dout], |_| (rng.normal() * std) as f32);
        Self::from_params(weight, Tensor::zeros(&[dout]))
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Self {
        Self { weight: Param::new(weight), bias: Param::new(bias), input: None }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (n, din) = x.dims2()?;
        let (wdin, dout) = (self.in_features(), self.out_features());
        if din != wdin {
            return dim_err("dense", format!("input {:?} does not match weight {:?}", x.shape(), self.weight.value.shape()));
        }
        let mut out = vec![0.0; n * dout];
        for row in out.chunks_exact_mut(dout) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(Transpose::No, Transpose::No, n, dout, din, 1.0, x.data(), self.weight.value.data(), 1.0, &mut out);
        self.input = Some(x.clone());
        Tensor::new(vec![n, dout], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("dense_backward"))?;
        let (n, din) = x.dims2()?;
        let dout = self.out_features();
        if grad_out.shape() != [n, dout] {
            return dim_err("dense_backward", format!("grad_out {:?}, expected [{n}, {dout}]", grad_out.shape()));
        }
        let g = grad_out.data();
        gemm(Transpose::Yes, Transpose::No, din, dout, n, 1.0, x.data(), g, 1.0, self.weight.grad.data_mut());
        let db = self.bias.grad.data_mut();
        for row in g.chunks_exact(dout) {
            db.iter_mut().zip(row).for_each(|(b, r)| *b += r);
        }
        let mut dx = vec![0.0; n * din];
        gemm(Transpose::No, Transpose::Yes, n, din, dout, 1.0, g, self.weight.value.data(), 0.0, &mut dx);
        Tensor::new(vec![n, din], dx)
    }
}
