use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{dim_err, Result};

/// Output of [`maxpool2d`]: pooled values and, for each of them, the flat
/// index of the winning input element.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<u32>,
}

/// 2×2 max pooling with stride 2 and no padding. Ties go to the first element
/// in row-major window order.
pub fn maxpool2d(input: &Tensor) -> Result<Pooled> {
    let s = input.dims4()?;
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return dim_err("maxpool2d", format!("spatial extents must be even, got {:?}", input.shape()));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(s.n * s.c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for plane in 0..s.n * s.c {
        let base = plane * s.h * s.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * s.w + 2 * ox;
                let mut best = i0;
                for &i in &[i0 + 1, i0 + s.w, i0 + s.w + 1] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok(Pooled { output: Tensor::new(vec![s.n, s.c, oh, ow], out)?, argmax })
}

/// Routes each pooled gradient back to its argmax element.
pub fn maxpool2d_backward(grad_out: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.numel() != argmax.len() {
        return dim_err(
            "maxpool2d_backward",
            format!("{} gradients for {} argmax entries", grad_out.numel(), argmax.len()),
        );
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        d[i as usize] += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d(&x).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
    }

    #[test]
    fn constant_input() {
        let x = Tensor::full(&[2, 3, 4, 6], 7.5);
        let p = maxpool2d(&x).unwrap();
        assert_eq!(p.output.shape(), &[2, 3, 2, 3]);
        assert!(p.output.data().iter().all(|&v| v == 7.5));
    }

    #[test]
    fn ramp_windows() {
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| i as f32);
        let p = maxpool2d(&x).unwrap();
        assert_eq!(p.output.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn odd_extent_rejected() {
        assert!(maxpool2d(&Tensor::zeros(&[1, 1, 3, 4])).is_err());
        assert!(maxpool2d(&Tensor::zeros(&[1, 1, 4, 5])).is_err());
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| i as f32);
        let p = maxpool2d(&x).unwrap();
        let g = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dx = maxpool2d_backward(&g, &p.argmax, x.shape()).unwrap();
        let mut want = [0.0f32; 16];
        want[5] = 1.0;
        want[7] = 2.0;
        want[13] = 3.0;
        want[15] = 4.0;
        assert_eq!(dx.data(), &want);
    }
}
