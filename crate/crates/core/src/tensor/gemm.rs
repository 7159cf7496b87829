use alloc::format;
use alloc::vec;

use super::Tensor;
use crate::error::{dim_err, Result};

/// How a row-major operand is read by [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// `c[m×n] = alpha · op(a) · op(b) + beta · c` on row-major slices.
///
/// `op(a)` is `m×k`: with `Transpose::No` `a` is stored `m×k`, otherwise `k×m`.
/// Likewise `op(b)` is `k×n`. Backed by `matrixmultiply::sgemm`, which is
/// single-threaded and deterministic for a fixed input.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    ta: Transpose,
    tb: Transpose,
    m: usize,
    n: usize,
    k: usize,
    alpha: f32,
    a: &[f32],
    b: &[f32],
    beta: f32,
    c: &mut [f32],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
    let (rsa, csa) = match ta {
        Transpose::No => (k as isize, 1),
        Transpose::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Transpose::No => (n as isize, 1),
        Transpose::Yes => (1, k as isize),
    };
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major blocks whose lengths were checked against the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return dim_err(
            "matmul",
            format!("inner dimensions of {:?} and {:?} do not agree", a.shape(), b.shape()),
        );
    }
    let mut out = vec![0.0; m * n];
    gemm(Transpose::No, Transpose::No, m, n, k, 1.0, a.data(), b.data(), 0.0, &mut out);
    Tensor::new(vec![m, n], out)
}
