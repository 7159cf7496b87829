//! Batch, layer and instance normalization over `[n, c, h, w]` activations.
//!
//! All three share one kernel. The tensor is walked as `n·c` contiguous planes
//! of `h·w` values, and each plane belongs to exactly one statistics group:
//!
//! | kind     | reduced axes | group of plane `(n, c)` |
//! |----------|--------------|-------------------------|
//! | batch    | n, h, w      | `c`                     |
//! | layer    | c, h, w      | `n`                     |
//! | instance | h, w         | `n·C + c`               |
//!
//! The affine scale `gamma` and shift `beta` are per channel for every kind.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{missing_cache, Mode, Param};
use crate::error::{dim_err, Result};
use crate::tensor::reduce_mean_var;
use crate::{Shape4, Tensor};

pub const BN_MOMENTUM: f32 = 0.1;
pub const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Batch,
    Layer,
    Instance,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::Batch => "batch",
            NormKind::Layer => "layer",
            NormKind::Instance => "instance",
        }
    }

    fn axes(self) -> &'static [usize] {
        match self {
            NormKind::Batch => &[0, 2, 3],
            NormKind::Layer => &[1, 2, 3],
            NormKind::Instance => &[2, 3],
        }
    }

    fn group(self, n: usize, c: usize, channels: usize) -> usize {
        match self {
            NormKind::Batch => c,
            NormKind::Layer => n,
            NormKind::Instance => n * channels + c,
        }
    }

    fn group_size(self, s: Shape4) -> usize {
        match self {
            NormKind::Batch => s.n * s.plane(),
            NormKind::Layer => s.c * s.plane(),
            NormKind::Instance => s.plane(),
        }
    }
}

#[derive(Debug, Clone)]
struct Cache {
    shape: Shape4,
    xhat: Tensor,
    inv_std: Vec<f32>,
    batch_stats: bool,
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub kind: NormKind,
    pub gamma: Param,
    pub beta: Param,
    /// Only used by batch norm; stays at (0, 1) for the other kinds.
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f32,
    pub eps: f32,
    cache: Option<Cache>,
}

impl Norm {
    pub fn new(kind: NormKind, channels: usize) -> Self {
        Self {
            kind,
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: BN_MOMENTUM,
            eps: NORM_EPS,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.numel()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = x.dims4()?;
        if s.c != self.channels() {
            return dim_err(
                "norm",
                format!("{} norm has {} channels, input {:?}", self.kind.name(), self.channels(), x.shape()),
            );
        }
        let batch_stats = !(self.kind == NormKind::Batch && mode == Mode::Eval);
        if batch_stats && self.kind.group_size(s) < 2 {
            return dim_err(
                "norm",
                format!("{} norm needs at least 2 values per group, input {:?}", self.kind.name(), x.shape()),
            );
        }
        let (mean, var) = if batch_stats {
            let (mean, var) = reduce_mean_var(x, self.kind.axes(), self.eps)?;
            if self.kind == NormKind::Batch {
                let m = self.momentum;
                for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean.data()) {
                    *r = (1.0 - m) * *r + m * b;
                }
                for (r, &b) in self.running_var.data_mut().iter_mut().zip(var.data()) {
                    *r = (1.0 - m) * *r + m * b;
                }
            }
            (mean.into_data(), var.into_data())
        } else {
            (self.running_mean.data().to_vec(), self.running_var.data().to_vec())
        };
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / crate::math::sqrtf(v + self.eps)).collect();

        let plane = s.plane();
        let mut xhat = vec![0.0; x.numel()];
        let mut y = vec![0.0; x.numel()];
        for n in 0..s.n {
            for c in 0..s.c {
                let g = self.kind.group(n, c, s.c);
                let (mu, is) = (mean[g], inv_std[g]);
                let (gamma, beta) = (self.gamma.value.data()[c], self.beta.value.data()[c]);
                let off = (n * s.c + c) * plane;
                for i in off..off + plane {
                    let h = (x.data()[i] - mu) * is;
                    xhat[i] = h;
                    y[i] = gamma * h + beta;
                }
            }
        }
        self.cache = Some(Cache { shape: s, xhat: Tensor::new(s.to_vec(), xhat)?, inv_std, batch_stats });
        Tensor::new(s.to_vec(), y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("norm_backward"))?;
        let s = cache.shape;
        if grad_out.shape() != s.to_vec().as_slice() {
            return dim_err("norm_backward", format!("grad_out {:?} vs input {:?}", grad_out.shape(), s.to_vec()));
        }
        let plane = s.plane();
        let (g, xhat) = (grad_out.data(), cache.xhat.data());
        let gamma = self.gamma.value.data();

        let groups = cache.inv_std.len();
        let mut sum_dxhat = vec![0.0f64; groups];
        let mut sum_dxhat_xhat = vec![0.0f64; groups];
        for n in 0..s.n {
            for c in 0..s.c {
                let grp = self.kind.group(n, c, s.c);
                let off = (n * s.c + c) * plane;
                let (mut dgamma, mut dbeta) = (0.0f64, 0.0f64);
                for i in off..off + plane {
                    dgamma += (g[i] * xhat[i]) as f64;
                    dbeta += g[i] as f64;
                }
                self.gamma.grad.data_mut()[c] += dgamma as f32;
                self.beta.grad.data_mut()[c] += dbeta as f32;
                sum_dxhat[grp] += dbeta * gamma[c] as f64;
                sum_dxhat_xhat[grp] += dgamma * gamma[c] as f64;
            }
        }

        let count = self.kind.group_size(s) as f64;
        let mut dx = vec![0.0; grad_out.numel()];
        for n in 0..s.n {
            for c in 0..s.c {
                let grp = self.kind.group(n, c, s.c);
                let is = cache.inv_std[grp];
                let off = (n * s.c + c) * plane;
                if cache.batch_stats {
                    let m1 = (sum_dxhat[grp] / count) as f32;
                    let m2 = (sum_dxhat_xhat[grp] / count) as f32;
                    for i in off..off + plane {
                        dx[i] = is * (g[i] * gamma[c] - m1 - xhat[i] * m2);
                    }
                } else {
                    for i in off..off + plane {
                        dx[i] = is * g[i] * gamma[c];
                    }
                }
            }
        }
        Tensor::new(s.to_vec(), dx)
    }
}
