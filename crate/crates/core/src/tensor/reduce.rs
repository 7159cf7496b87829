use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Mean and biased (population) variance over `axes`, keeping the reduced
/// axes as size-1 dimensions. Accumulates in `f64`.
///
/// `eps` is the stabiliser the caller will add before taking a square root;
/// it is validated here so that every normalization shares one contract.
pub fn reduce_mean_var(input: &Tensor, axes: &[usize], eps: f32) -> Result<(Tensor, Tensor)> {
    let shape = input.shape();
    let rank = shape.len();
    if axes.is_empty() {
        return dim_err("reduce_mean_var", "empty reduction axis set".into());
    }
    if let Some(&bad) = axes.iter().find(|&&a| a >= rank) {
        return dim_err("reduce_mean_var", format!("axis {bad} out of range for shape {shape:?}"));
    }
    if !(eps > 0.0) {
        return Err(Error::Numeric(format!("eps must be positive, got {eps}")));
    }
    let mut out_shape = shape.to_vec();
    for &a in axes {
        out_shape[a] = 1;
    }
    // Row-major strides of the reduced tensor, with zero stride on reduced axes.
    let mut out_strides = vec![0usize; rank];
    let mut stride = 1;
    for d in (0..rank).rev() {
        if !axes.contains(&d) {
            out_strides[d] = stride;
        }
        stride *= out_shape[d];
    }
    let groups: usize = out_shape.iter().product();
    let count = (input.numel() / groups) as f64;

    let offsets = OffsetIter::new(shape, &out_strides);
    let mut sums = vec![0.0f64; groups];
    for (&x, o) in input.data().iter().zip(offsets) {
        sums[o] += x as f64;
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count).collect();
    let mut sq = vec![0.0f64; groups];
    for (&x, o) in input.data().iter().zip(OffsetIter::new(shape, &out_strides)) {
        let d = x as f64 - means[o];
        sq[o] += d * d;
    }
    let mean = Tensor::new(out_shape.clone(), means.iter().map(|&m| m as f32).collect())?;
    let var = Tensor::new(out_shape, sq.iter().map(|&s| (s / count) as f32).collect())?;
    Ok((mean, var))
}

/// Walks a shape in row-major order yielding the matching offset in a
/// (possibly broadcast) tensor with the given strides.
struct OffsetIter<'a> {
    shape: &'a [usize],
    strides: &'a [usize],
    index: Vec<usize>,
    offset: usize,
    remaining: usize,
}

impl<'a> OffsetIter<'a> {
    fn new(shape: &'a [usize], strides: &'a [usize]) -> Self {
        Self { shape, strides, index: vec![0; shape.len()], offset: 0, remaining: shape.iter().product() }
    }
}

impl Iterator for OffsetIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let current = self.offset;
        for d in (0..self.shape.len()).rev() {
            self.index[d] += 1;
            self.offset += self.strides[d];
            if self.index[d] < self.shape[d] {
                break;
            }
            self.offset -= self.strides[d] * self.index[d];
            self.index[d] = 0;
        }
        Some(current)
    }
}
