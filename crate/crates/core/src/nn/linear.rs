use alloc::vec::Vec;

use rand::Rng;

use super::{matmul, Mat, Param, Real};

/// Fully connected layer `y = W·x + b`, weights `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain * libm::sqrt(1.0 / in_features as f64);
        Self {
            in_features,
            out_features,
            weight: Param::normal(in_features * out_features, std, rng),
            bias: Param::zeros(out_features),
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.in_features, "linear input length mismatch");
        let mut y = self.bias.value.clone();
        matmul(
            Mat::new(&self.weight.value, self.out_features, self.in_features),
            Mat::new(x, self.in_features, 1),
            &mut y,
            true,
        );
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[T], dy: &[T]) -> Vec<T> {
        for (g, &d) in self.bias.grad.iter_mut().zip(dy) {
            *g += d;
        }
        matmul(
            Mat::new(dy, self.out_features, 1),
            Mat::new(x, 1, self.in_features),
            &mut self.weight.grad,
            true,
        );
        let mut dx = alloc::vec![T::zero(); self.in_features];
        matmul(
            Mat::new(&self.weight.value, self.out_features, self.in_features).t(),
            Mat::new(dy, self.out_features, 1),
            &mut dx,
            false,
        );
        dx
    }
}
