//! 3×3 "same" cross-correlation via im2col + GEMM.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{gemm, Transpose};
use super::{Shape4, Tensor};
use crate::error::{dim_err, Result};

const K: usize = 3;
const TAPS: usize = K * K;

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor>,
    pub kernels: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<(Shape4, usize)> {
    let s = input.dims4()?;
    let kshape = kernels.shape();
    if kshape.len() != 4 || kshape[2] != K || kshape[3] != K {
        return dim_err("conv2d", format!("kernels must be [cout, cin, 3, 3], got {kshape:?}"));
    }
    if kshape[1] != s.c {
        return dim_err(
            "conv2d",
            format!("input has {} channels but kernels {kshape:?} expect {}", s.c, kshape[1]),
        );
    }
    let cout = kshape[0];
    if bias.shape() != [cout] {
        return dim_err("conv2d", format!("bias must be [{cout}], got {:?}", bias.shape()));
    }
    Ok((s, cout))
}

/// Fills `col` (`[cin·9, h·w]`) with the zero-padded 3×3 neighbourhoods of one sample.
fn im2col(x: &[f32], c: usize, h: usize, w: usize, col: &mut [f32]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut col[(ci * TAPS + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `col` back onto one sample's input gradient; inverse wiring of [`im2col`].
fn col2im(col: &[f32], c: usize, h: usize, w: usize, dx: &mut [f32]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &col[(ci * TAPS + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

/// 3×3 cross-correlation (no kernel flip) with a one-pixel zero border, plus
/// a per-output-channel bias. `[n, cin, h, w] → [n, cout, h, w]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (s, cout) = check(input, kernels, bias)?;
    let hw = s.plane();
    let kdim = s.c * TAPS;
    let mut col = vec![0.0; kdim * hw];
    let mut out = vec![0.0; s.n * cout * hw];
    for n in 0..s.n {
        im2col(&input.data()[n * s.c * hw..(n + 1) * s.c * hw], s.c, s.h, s.w, &mut col);
        let dst = &mut out[n * cout * hw..(n + 1) * cout * hw];
        for (co, plane) in dst.chunks_exact_mut(hw).enumerate() {
            plane.fill(bias.data()[co]);
        }
        gemm(Transpose::No, Transpose::No, cout, hw, kdim, 1.0, kernels.data(), &col, 1.0, dst);
    }
    Tensor::new(vec![s.n, cout, s.h, s.w], out)
}

/// Backward pass of [`conv2d`] for upstream gradient `grad_out`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    want_input_grad: bool,
) -> Result<Conv2dGrads> {
    let cout = kernels.shape().first().copied().unwrap_or(0);
    let (s, cout) = check(input, kernels, &Tensor::zeros(&[cout.max(1)]))?;
    if grad_out.shape() != [s.n, cout, s.h, s.w] {
        return dim_err(
            "conv2d_backward",
            format!("grad_out {:?} does not match output [{}, {cout}, {}, {}]", grad_out.shape(), s.n, s.h, s.w),
        );
    }
    let hw = s.plane();
    let kdim = s.c * TAPS;
    let mut col = vec![0.0; kdim * hw];
    let mut dcol = if want_input_grad { vec![0.0; kdim * hw] } else { Vec::new() };
    let mut dk = vec![0.0; cout * kdim];
    let mut db = vec![0.0f32; cout];
    let mut dx = if want_input_grad { vec![0.0; input.numel()] } else { Vec::new() };
    for n in 0..s.n {
        let dy = &grad_out.data()[n * cout * hw..(n + 1) * cout * hw];
        im2col(&input.data()[n * s.c * hw..(n + 1) * s.c * hw], s.c, s.h, s.w, &mut col);
        gemm(Transpose::No, Transpose::Yes, cout, kdim, hw, 1.0, dy, &col, 1.0, &mut dk);
        for (b, plane) in db.iter_mut().zip(dy.chunks_exact(hw)) {
            *b += plane.iter().sum::<f32>();
        }
        if want_input_grad {
            gemm(Transpose::Yes, Transpose::No, kdim, hw, cout, 1.0, kernels.data(), dy, 0.0, &mut dcol);
            col2im(&dcol, s.c, s.h, s.w, &mut dx[n * s.c * hw..(n + 1) * s.c * hw]);
        }
    }
    Ok(Conv2dGrads {
        input: if want_input_grad { Some(Tensor::new(input.shape().to_vec(), dx)?) } else { None },
        kernels: Tensor::new(kernels.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![cout], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    /// Direct six-loop cross-correlation used as the oracle.
    fn direct(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Tensor {
        let s = input.dims4().unwrap();
        let cout = kernels.shape()[0];
        let mut out = Tensor::zeros(&[s.n, cout, s.h, s.w]);
        for n in 0..s.n {
            for co in 0..cout {
                for y in 0..s.h {
                    for x in 0..s.w {
                        let mut acc = bias.data()[co] as f64;
                        for ci in 0..s.c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                    if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                        continue;
                                    }
                                    let iv = input.data()[((n * s.c + ci) * s.h + sy as usize) * s.w + sx as usize];
                                    let kv = kernels.data()[((co * s.c + ci) * 3 + ky) * 3 + kx];
                                    acc += iv as f64 * kv as f64;
                                }
                            }
                        }
                        out.data_mut()[((n * cout + co) * s.h + y) * s.w + x] = acc as f32;
                    }
                }
            }
        }
        out
    }

    fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.normal() as f32)
    }

    #[test]
    fn ones_on_ones() {
        let out = conv2d(&Tensor::full(&[1, 1, 3, 3], 1.0), &Tensor::full(&[1, 1, 3, 3], 1.0), &Tensor::zeros(&[1]))
            .unwrap();
        assert_eq!(out.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut rng = Rng::new(2);
        let x = randn(&[2, 3, 5, 4], &mut rng);
        let b = Tensor::new(vec![2], vec![0.5, -1.25]).unwrap();
        let out = conv2d(&x, &Tensor::zeros(&[2, 3, 3, 3]), &b).unwrap();
        for (i, v) in out.data().iter().enumerate() {
            assert_eq!(*v, b.data()[(i / 20) % 2]);
        }
    }

    #[test]
    fn delta_kernel_sums_channels() {
        let mut rng = Rng::new(3);
        let x = randn(&[2, 3, 4, 4], &mut rng);
        let mut k = Tensor::zeros(&[1, 3, 3, 3]);
        for ci in 0..3 {
            k.data_mut()[ci * 9 + 4] = 1.0;
        }
        let out = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap();
        let want = direct(&x, &k, &Tensor::zeros(&[1]));
        for n in 0..2 {
            for p in 0..16 {
                let sum: f32 = (0..3).map(|c| x.data()[(n * 3 + c) * 16 + p]).sum();
                assert!((out.data()[n * 16 + p] - sum).abs() < 1e-5);
                assert!((want.data()[n * 16 + p] - sum).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = Rng::new(4);
        for &(n, cin, cout, h, w) in &[(1, 1, 1, 1, 1), (2, 3, 4, 5, 6), (1, 4, 2, 8, 8), (3, 2, 3, 2, 7)] {
            let x = randn(&[n, cin, h, w], &mut rng);
            let k = randn(&[cout, cin, 3, 3], &mut rng);
            let b = randn(&[cout], &mut rng);
            let got = conv2d(&x, &k, &b).unwrap();
            let want = direct(&x, &k, &b);
            for (g, e) in got.data().iter().zip(want.data()) {
                assert!((g - e).abs() < 1e-4, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let err = conv2d(&Tensor::zeros(&[1, 2, 4, 4]), &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1]));
        assert!(matches!(err, Err(crate::Error::Dimension { .. })));
        let err = conv2d(&Tensor::zeros(&[1, 3, 4, 4]), &Tensor::zeros(&[1, 3, 5, 5]), &Tensor::zeros(&[1]));
        assert!(err.is_err());
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), g> = <x, dX(g)> + <k, dK(g)> split by linearity in each argument.
        let mut rng = Rng::new(5);
        let x = randn(&[2, 3, 5, 5], &mut rng);
        let k = randn(&[4, 3, 3, 3], &mut rng);
        let g = randn(&[2, 4, 5, 5], &mut rng);
        let zero_b = Tensor::zeros(&[4]);
        let y = conv2d(&x, &k, &zero_b).unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let grads = conv2d_backward(&x, &k, &g, true).unwrap();
        let via_x: f64 = grads.input.unwrap().data().iter().zip(x.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let via_k: f64 = grads.kernels.data().iter().zip(k.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - via_x).abs() < 1e-3 * lhs.abs().max(1.0));
        assert!((lhs - via_k).abs() < 1e-3 * lhs.abs().max(1.0));
        let bias_sum: f32 = grads.bias.data().iter().sum();
        assert!((bias_sum as f64 - g.sum()).abs() < 1e-3);
    }
}
