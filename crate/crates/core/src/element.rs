use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Numeric element stored in a [`crate::Tensor`].
///
/// `f32` is the training type; `f64` is used by gradient checks and loop oracles.
pub trait Element:
    Float
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::of_f64(v as f64)
    }

    /// `c += a · b` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
    fn gemm_acc(a: &[Self], b: &[Self], c: &mut [Self], m: usize, k: usize, n: usize);
}

impl Element for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm_acc(a: &[Self], b: &[Self], c: &mut [Self], m: usize, k: usize, n: usize) {
        check_gemm(a, b, c, m, k, n);
        // SAFETY: slice lengths checked against the row-major extents above.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                1.0, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Element for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn gemm_acc(a: &[Self], b: &[Self], c: &mut [Self], m: usize, k: usize, n: usize) {
        check_gemm(a, b, c, m, k, n);
        // SAFETY: slice lengths checked against the row-major extents above.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                1.0, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

fn check_gemm<T>(a: &[T], b: &[T], c: &[T], m: usize, k: usize, n: usize) {
    assert!(
        a.len() == m * k && b.len() == k * n && c.len() == m * n,
        "gemm extents {m}×{k}×{n} do not match buffers {}/{}/{}",
        a.len(),
        b.len(),
        c.len()
    );
}
