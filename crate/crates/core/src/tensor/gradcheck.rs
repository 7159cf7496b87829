//! Central-difference gradient oracle.

use alloc::format;

use super::Tensor;
use crate::error::{Error, Result};

/// Default perturbation for `f32` inputs.
pub const DEFAULT_FD_EPS: f32 = 1e-3;

/// `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)` for every element `i`.
///
/// `f` returns `f64` so the caller can accumulate its scalar without adding
/// `f32` rounding to the cancellation already inherent in the difference.
pub fn finite_difference_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f32) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::Numeric(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("objective is not finite around element {i}")));
        }
        // Use the perturbation actually representable in f32.
        let step = ((orig + eps) as f64) - ((orig - eps) as f64);
        grad.data_mut()[i] = ((plus - minus) / step) as f32;
    }
    Ok(grad)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both are zero.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "relative_error on different shapes");
    let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x as f64, y as f64);
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let scale = crate::math::sqrt(na.max(nb));
    if scale == 0.0 {
        0.0
    } else {
        crate::math::sqrt(diff) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn square_sum() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let g = finite_difference_grad(|t| t.data().iter().map(|&v| (v as f64) * (v as f64)).sum(), &x, 1e-3).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-4);
        assert!((g.data()[1] - 4.0).abs() < 1e-4);
    }

    #[test]
    fn constant_objective() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 5.0]).unwrap();
        let g = finite_difference_grad(|_| 4.0, &x, 1e-3).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_subgradient() {
        let x = Tensor::new(vec![2], vec![3.0, -3.0]).unwrap();
        let g = finite_difference_grad(|t| t.data().iter().map(|&v| v.max(0.0) as f64).sum(), &x, 1e-3).unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-4);
        assert_eq!(g.data()[1], 0.0);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        assert!(matches!(finite_difference_grad(|_| f64::NAN, &x, 1e-3), Err(Error::Numeric(_))));
        assert!(finite_difference_grad(|_| 0.0, &x, 0.0).is_err());
    }

    #[test]
    fn relative_error_basics() {
        let a = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let z = Tensor::zeros(&[2]);
        assert_eq!(relative_error(&z, &z), 0.0);
        assert_eq!(relative_error(&a, &a), 0.0);
        assert!((relative_error(&a, &z) - 1.0).abs() < 1e-12);
    }
}
