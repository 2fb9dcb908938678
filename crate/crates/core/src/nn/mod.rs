//! A minimal 3D convolution toolkit with hand-written backward passes.
//!
//! Networks process one sample at a time; mini-batches are formed by
//! accumulating gradients over samples before an optimizer step. All layers
//! are generic over [`Real`] so the same code runs in `f32` for training and
//! in `f64` for finite-difference gradient checks.

mod block;
mod conv;
mod linear;
mod norm;

pub use block::{Block, BlockCache};
pub(crate) use block::{backward_chain, chain_params, forward_chain};
pub use conv::{Conv3d, ConvCache};
pub use linear::Linear;
pub use norm::{InstanceNorm3d, NormCache};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

use rand::Rng;

/// Floating-point scalar usable by the layers.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + core::iter::Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// `c ← alpha·a·b + beta·c` on strided row/column storage.
    ///
    /// # Safety
    /// The pointers and strides must describe valid `m×k`, `k×n` and `m×n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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

    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("finite constant")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        unsafe { matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        unsafe { matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
    }
}

/// Row-major matrix operand, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    /// Stored row count and column count (before transposition).
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T> Mat<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, transposed: false }
    }

    pub fn t(self) -> Self {
        Self { transposed: !self.transposed, ..self }
    }

    fn logical(&self) -> (usize, usize, isize, isize) {
        if self.transposed {
            (self.cols, self.rows, 1, self.cols as isize)
        } else {
            (self.rows, self.cols, self.cols as isize, 1)
        }
    }
}

/// `c ← a·b` (or `c += a·b` when `accumulate`), `c` row-major `m×n`.
pub(crate) fn matmul<T: Real>(a: Mat<'_, T>, b: Mat<'_, T>, c: &mut [T], accumulate: bool) {
    let (m, k, rsa, csa) = a.logical();
    let (k2, n, rsb, csb) = b.logical();
    assert_eq!(k, k2, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: bounds asserted above; `c` is a distinct &mut borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self { value, grad }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![T::zero(); len])
    }

    pub fn filled(len: usize, v: T) -> Self {
        Self::new(vec![v; len])
    }

    /// Normal initialization with standard deviation `std`.
    pub fn normal<R: Rng + ?Sized>(len: usize, std: f64, rng: &mut R) -> Self {
        Self::new((0..len).map(|_| T::of(std * crate::rng::standard_normal(rng))).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Named mutable view of every parameter of a model, in a stable order.
pub type ParamsMut<'a, T> = Vec<(String, &'a mut Param<T>)>;

/// Plain SGD with optional classical momentum.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self { learning_rate: T::of(learning_rate), momentum: T::of(momentum), velocity: Vec::new() }
    }

    pub fn step(&mut self, params: ParamsMut<'_, T>) {
        if self.momentum == T::zero() {
            for (_, p) in params {
                for (v, g) in p.value.iter_mut().zip(&p.grad) {
                    *v -= self.learning_rate * *g;
                }
            }
            return;
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
        }
        for ((_, p), vel) in params.into_iter().zip(&mut self.velocity) {
            for ((v, g), m) in p.value.iter_mut().zip(&p.grad).zip(vel.iter_mut()) {
                *m = self.momentum * *m + *g;
                *v -= self.learning_rate * *m;
            }
        }
    }
}

/// A channel-major 3D feature map; spatial order is `[depth(z), height(y), width(x)]`
/// with x fastest, matching [`crate::VolumetricMask`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub shape: [usize; 3],
    pub data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn zeros(channels: usize, shape: [usize; 3]) -> Self {
        Self { channels, shape, data: vec![T::zero(); channels * shape.iter().product::<usize>()] }
    }

    pub fn from_vec(channels: usize, shape: [usize; 3], data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * shape.iter().product::<usize>());
        Self { channels, shape, data }
    }

    pub fn spatial(&self) -> usize {
        self.shape.iter().product()
    }

    /// Converts a soft mask (x-fastest, channel-major) to a feature map.
    pub fn from_soft_mask(mask: &crate::SoftMask) -> Self {
        let [nx, ny, nz] = mask.dims();
        Self::from_vec(mask.channels(), [nz, ny, nx], mask.data().iter().map(|&v| T::of(f64::from(v))).collect())
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_transposes() {
        // a: 2×3, b: 3×2
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        matmul(Mat::new(&a, 2, 3), Mat::new(&b, 3, 2), &mut c, false);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // aᵀ·a is 3×3
        let mut g = [0.0; 9];
        matmul(Mat::new(&a, 2, 3).t(), Mat::new(&a, 2, 3), &mut g, false);
        assert_eq!(g, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        matmul(Mat::new(&a, 2, 3).t(), Mat::new(&a, 2, 3), &mut g, true);
        assert_eq!(g[0], 34.0);
    }

    #[test]
    fn sgd_plain_and_momentum() {
        let mut p = Param::<f64>::new(vec![1.0]);
        p.grad[0] = 2.0;
        Sgd::new(0.1, 0.0).step(vec![(String::new(), &mut p)]);
        assert!((p.value[0] - 0.8).abs() < 1e-12);
        let mut opt = Sgd::new(0.1, 0.5);
        opt.step(vec![(String::new(), &mut p)]);
        opt.step(vec![(String::new(), &mut p)]);
        // velocities 2, 3
        assert!((p.value[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
