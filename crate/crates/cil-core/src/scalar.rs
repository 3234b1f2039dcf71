//! Floating-point abstraction: everything numeric is generic over [`Scalar`],
//! implemented for `f32` (training) and `f64` (oracles and checks).

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Dense matrix multiply backend, `c = alpha * a·b + beta * c` on row-major
/// buffers with explicit strides. Backed by `matrixmultiply`.
pub trait Gemm: Copy {
    /// # Safety
    ///
    /// `a`, `b`, and `c` must point to allocations that stay valid for the
    /// whole call and cover every element addressed by the `m`/`k`/`n`
    /// extents with the given row/column strides; `c` must not alias `a` or
    /// `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Gemm for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Gemm for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Scalar type for all tensors, parameters and losses.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + Gemm
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast an `f64` constant into the working scalar type.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips_simple_constants() {
        assert_eq!(cast::<f32>(0.5), 0.5f32);
        assert_eq!(cast::<f64>(0.5), 0.5f64);
    }
}
