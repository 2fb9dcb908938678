use alloc::vec::Vec;

use super::{FeatureMap, Param, Real};

/// Per-sample, per-channel normalization with a learned affine transform.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm3d<T> {
    pub channels: usize,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Real> InstanceNorm3d<T> {
    pub fn new(channels: usize) -> Self {
        Self { channels, eps: 1e-5, gamma: Param::filled(channels, T::one()), beta: Param::zeros(channels) }
    }

    pub fn forward(&self, x: &mut FeatureMap<T>, keep_cache: bool) -> Option<NormCache<T>> {
        let n = x.spatial();
        let nf = T::of(n as f64);
        let eps = T::of(self.eps);
        let mut inv_std = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let slab = &mut x.data[c * n..(c + 1) * n];
            let mean = slab.iter().copied().sum::<T>() / nf;
            let var = slab.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let inv = T::one() / (var + eps).sqrt();
            slab.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let cache = keep_cache.then(|| NormCache { normalized: x.data.clone(), inv_std });
        for c in 0..self.channels {
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            x.data[c * n..(c + 1) * n].iter_mut().for_each(|v| *v = *v * g + b);
        }
        cache
    }

    /// Accumulates γ/β gradients and rewrites `dy` into the input gradient.
    pub fn backward(&mut self, cache: &NormCache<T>, dy: &mut FeatureMap<T>) {
        let n = dy.spatial();
        let nf = T::of(n as f64);
        for c in 0..self.channels {
            let xhat = &cache.normalized[c * n..(c + 1) * n];
            let g = &mut dy.data[c * n..(c + 1) * n];
            let sum_dy = g.iter().copied().sum::<T>();
            let sum_dy_xhat = g.iter().zip(xhat).map(|(&d, &h)| d * h).sum::<T>();
            self.beta.grad[c] += sum_dy;
            self.gamma.grad[c] += sum_dy_xhat;
            let scale = self.gamma.value[c] * cache.inv_std[c] / nf;
            for (d, &h) in g.iter_mut().zip(xhat) {
                *d = scale * (nf * *d - sum_dy - h * sum_dy_xhat);
            }
        }
    }
}
