//! Finite-difference audit of every layer's backward pass.
//!
//! Each check draws random inputs and parameters, contracts the layer output
//! with a random cotangent `r` to get the scalar `Σ r·y`, and compares the
//! analytic gradients against central differences of that scalar.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    softmax_cross_entropy, ChannelDropout, Conv2d, Dense, GrayscaleConcat, MaxPool, Mode, Norm, NormKind, Relu,
};
use crate::error::Result;
use crate::tensor::{finite_difference_grad, relative_error};
use crate::{Rng, Tensor};

/// Step for layers that are smooth at the sampled points.
const SMOOTH_EPS: f32 = 1e-2;
/// Step for piecewise-linear layers; samples keep at least `KINK_MARGIN` from
/// every kink so no step crosses one.
const KINK_EPS: f32 = 1e-3;
const KINK_MARGIN: f32 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv,
    Dense,
    Relu,
    MaxPool,
    SoftmaxCrossEntropy,
    BatchNorm,
    BatchNormEval,
    LayerNorm,
    InstanceNorm,
    GrayscaleConcat,
    ChannelDropout,
}

impl Layer {
    pub const ALL: [Layer; 11] = [
        Layer::Conv,
        Layer::Dense,
        Layer::Relu,
        Layer::MaxPool,
        Layer::SoftmaxCrossEntropy,
        Layer::BatchNorm,
        Layer::BatchNormEval,
        Layer::LayerNorm,
        Layer::InstanceNorm,
        Layer::GrayscaleConcat,
        Layer::ChannelDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Conv => "conv",
            Layer::Dense => "dense",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::SoftmaxCrossEntropy => "softmax_cross_entropy",
            Layer::BatchNorm => "batch_norm",
            Layer::BatchNormEval => "batch_norm_eval",
            Layer::LayerNorm => "layer_norm",
            Layer::InstanceNorm => "instance_norm",
            Layer::GrayscaleConcat => "grayscale_concat",
            Layer::ChannelDropout => "channel_dropout",
        }
    }
}

/// Worst relative error of one layer over all seeds and all gradients
/// (input and parameters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerAudit {
    pub layer: Layer,
    pub seeds: usize,
    pub worst_error: f64,
}

fn normal(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal() as f32).collect()).expect("positive shape")
}

/// Normal samples redrawn until they are at least `KINK_MARGIN` from zero.
fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut t = normal(shape, rng);
    for v in t.data_mut() {
        while v.abs() < KINK_MARGIN {
            *v = rng.normal() as f32;
        }
    }
    t
}

/// Distinct values spaced `2·KINK_MARGIN` apart in random order, so every
/// pooling window has a clear winner.
fn spaced(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * 2.0 * KINK_MARGIN).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape.to_vec(), vals).expect("positive shape")
}

fn contract(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Relative error between `analytic` and central differences of `f` at `x`.
fn compare(analytic: &Tensor, f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f32) -> Result<f64> {
    Ok(relative_error(analytic, &finite_difference_grad(f, x, eps)?))
}

fn check_conv(rng: &mut Rng) -> Result<f64> {
    let x = normal(&[2, 3, 5, 6], rng);
    let mut conv = Conv2d::new(3, 4, rng);
    conv.bias.value = normal(&[4], rng);
    conv.propagate_input_grad = true;
    let r = normal(&[2, 4, 5, 6], rng);
    conv.forward(&x)?;
    let dx = conv.backward(&r)?.expect("input gradient enabled");
    let (w, b) = (conv.weight.value.clone(), conv.bias.value.clone());
    let eval = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
        contract(&crate::tensor::conv2d(x, w, b).expect("shapes fixed"), &r)
    };
    let e_x = compare(&dx, |x| eval(x, &w, &b), &x, SMOOTH_EPS)?;
    let e_w = compare(&conv.weight.grad, |w| eval(&x, w, &b), &w, SMOOTH_EPS)?;
    let e_b = compare(&conv.bias.grad, |b| eval(&x, &w, b), &b, SMOOTH_EPS)?;
    Ok(e_x.max(e_w).max(e_b))
}

fn check_dense(rng: &mut Rng) -> Result<f64> {
    let x = normal(&[3, 7], rng);
    let mut dense = Dense::new(7, 5, rng);
    dense.bias.value = normal(&[5], rng);
    let r = normal(&[3, 5], rng);
    dense.forward(&x)?;
    let dx = dense.backward(&r)?;
    let (w, b) = (dense.weight.value.clone(), dense.bias.value.clone());
    let eval = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
        let mut d = Dense::from_params(w.clone(), b.clone());
        contract(&d.forward(x).expect("shapes fixed"), &r)
    };
    let e_x = compare(&dx, |x| eval(x, &w, &b), &x, SMOOTH_EPS)?;
    let e_w = compare(&dense.weight.grad, |w| eval(&x, w, &b), &w, SMOOTH_EPS)?;
    let e_b = compare(&dense.bias.grad, |b| eval(&x, &w, b), &b, SMOOTH_EPS)?;
    Ok(e_x.max(e_w).max(e_b))
}

fn check_relu(rng: &mut Rng) -> Result<f64> {
    let x = away_from_zero(&[2, 3, 4, 4], rng);
    let r = normal(x.shape(), rng);
    let mut relu = Relu::default();
    relu.forward(&x);
    let dx = relu.backward(&r)?;
    compare(&dx, |x| contract(&super::relu(x), &r), &x, KINK_EPS)
}

fn check_maxpool(rng: &mut Rng) -> Result<f64> {
    let x = spaced(&[2, 2, 4, 6], rng);
    let r = normal(&[2, 2, 2, 3], rng);
    let mut pool = MaxPool::default();
    pool.forward(&x)?;
    let dx = pool.backward(&r)?;
    compare(&dx, |x| contract(&crate::tensor::maxpool2d(x).expect("even extents").output, &r), &x, KINK_EPS)
}

fn check_softmax_ce(rng: &mut Rng) -> Result<f64> {
    let logits = normal(&[4, 6], rng);
    let labels: Vec<usize> = (0..4).map(|_| rng.below(6) as usize).collect();
    let out = softmax_cross_entropy(&logits, &labels)?;
    compare(
        &out.grad_logits,
        |z| softmax_cross_entropy(z, &labels).expect("labels in range").loss as f64,
        &logits,
        SMOOTH_EPS,
    )
}

fn check_norm(kind: NormKind, mode: Mode, rng: &mut Rng) -> Result<f64> {
    let x = normal(&[3, 4, 3, 3], rng);
    let r = normal(x.shape(), rng);
    let mut norm = Norm::new(kind, 4);
    norm.gamma.value = normal(&[4], rng).map(|v| 1.0 + 0.5 * v);
    norm.beta.value = normal(&[4], rng);
    norm.running_mean = normal(&[4], rng);
    norm.running_var = normal(&[4], rng).map(|v| 0.5 + v.abs());
    let template = norm.clone();
    norm.forward(&x, mode)?;
    let dx = norm.backward(&r)?;
    let eval = |x: &Tensor, g: &Tensor, b: &Tensor| -> f64 {
        let mut n = template.clone();
        n.gamma.value = g.clone();
        n.beta.value = b.clone();
        contract(&n.forward(x, mode).expect("shapes fixed"), &r)
    };
    let (g, b) = (template.gamma.value.clone(), template.beta.value.clone());
    let e_x = compare(&dx, |x| eval(x, &g, &b), &x, SMOOTH_EPS)?;
    let e_g = compare(&norm.gamma.grad, |g| eval(&x, g, &b), &g, SMOOTH_EPS)?;
    let e_b = compare(&norm.beta.grad, |b| eval(&x, &g, b), &b, SMOOTH_EPS)?;
    Ok(e_x.max(e_g).max(e_b))
}

fn check_gray(rng: &mut Rng) -> Result<f64> {
    let x = normal(&[2, 3, 3, 4], rng);
    let raw = [rng.next_f32() + 0.1, rng.next_f32() + 0.1, rng.next_f32() + 0.1];
    let total: f32 = raw.iter().sum();
    let mut weights = raw.map(|w| w / total);
    weights[2] = 1.0 - weights[0] - weights[1];
    let gray = GrayscaleConcat { weights };
    let r = normal(&[2, 4, 3, 4], rng);
    let dx = gray.backward(&r)?;
    compare(&dx, |x| contract(&gray.forward(x).expect("three channels"), &r), &x, SMOOTH_EPS)
}

fn check_dropout(rng: &mut Rng) -> Result<f64> {
    let x = normal(&[3, 4, 3, 3], rng);
    let r = normal(x.shape(), rng);
    let hide: Vec<bool> = (0..3).map(|_| rng.below(2) == 1).collect();
    let mut dropout = ChannelDropout::new(0.5, true);
    dropout.forward_with_mask(&x, hide.clone())?;
    let dx = dropout.backward(&r)?;
    let mut probe = ChannelDropout::new(0.5, true);
    compare(
        &dx,
        |x| contract(&probe.forward_with_mask(x, hide.clone()).expect("four channels"), &r),
        &x,
        SMOOTH_EPS,
    )
}

/// Gradient error of `layer` for one seed.
pub fn check_layer(layer: Layer, seed: u64) -> Result<f64> {
    let mut rng = Rng::for_stream(seed, layer as u64);
    match layer {
        Layer::Conv => check_conv(&mut rng),
        Layer::Dense => check_dense(&mut rng),
        Layer::Relu => check_relu(&mut rng),
        Layer::MaxPool => check_maxpool(&mut rng),
        Layer::SoftmaxCrossEntropy => check_softmax_ce(&mut rng),
        Layer::BatchNorm => check_norm(NormKind::Batch, Mode::Train, &mut rng),
        Layer::BatchNormEval => check_norm(NormKind::Batch, Mode::Eval, &mut rng),
        Layer::LayerNorm => check_norm(NormKind::Layer, Mode::Train, &mut rng),
        Layer::InstanceNorm => check_norm(NormKind::Instance, Mode::Train, &mut rng),
        Layer::GrayscaleConcat => check_gray(&mut rng),
        Layer::ChannelDropout => check_dropout(&mut rng),
    }
}

/// Runs every layer check on seeds `0..seeds`.
pub fn audit_layers(seeds: u64) -> Result<Vec<LayerAudit>> {
    let mut out = vec![];
    for layer in Layer::ALL {
        let mut worst = 0.0f64;
        for seed in 0..seeds {
            worst = worst.max(check_layer(layer, seed)?);
        }
        out.push(LayerAudit { layer, seeds: seeds as usize, worst_error: worst });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = Rng::new(1);
        let x = normal(&[3, 4], &mut rng);
        let r = normal(&[3, 4], &mut rng);
        // d(Σ r·x²)/dx = 2·r·x; report r·x instead.
        let wrong = Tensor::new(x.shape().to_vec(), x.data().iter().zip(r.data()).map(|(a, b)| a * b).collect()).unwrap();
        let err = compare(&wrong, |x| contract(&x.map(|v| v * v), &r), &x, SMOOTH_EPS).unwrap();
        assert!(err > 0.1, "{err}");
    }
}
