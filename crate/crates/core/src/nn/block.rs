use alloc::string::String;
use alloc::vec::Vec;

use super::{Conv3d, ConvCache, FeatureMap, InstanceNorm3d, NormCache, ParamsMut, Real};

/// Convolution, optional instance normalization, optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub conv: Conv3d<T>,
    pub norm: Option<InstanceNorm3d<T>>,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    conv: ConvCache<T>,
    norm: Option<NormCache<T>>,
    /// Post-activation output; its sign pattern is the ReLU mask.
    activated: Option<Vec<T>>,
}

impl<T: Real> Block<T> {
    pub fn new(conv: Conv3d<T>, normalized: bool, relu: bool) -> Self {
        let norm = normalized.then(|| InstanceNorm3d::new(conv.out_channels));
        Self { conv, norm, relu }
    }

    pub fn forward(&self, x: &FeatureMap<T>, keep_cache: bool) -> (FeatureMap<T>, Option<BlockCache<T>>) {
        let (mut y, conv_cache) = self.conv.forward(x, keep_cache);
        let norm_cache = self.norm.as_ref().and_then(|n| n.forward(&mut y, keep_cache));
        if self.relu {
            y.data.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = T::zero()
                }
            });
        }
        let cache = conv_cache.map(|conv| BlockCache {
            conv,
            norm: norm_cache,
            activated: self.relu.then(|| y.data.clone()),
        });
        (y, cache)
    }

    pub fn backward(&mut self, cache: &BlockCache<T>, mut dy: FeatureMap<T>, input_grad: bool) -> Option<FeatureMap<T>> {
        if let Some(act) = &cache.activated {
            for (d, &a) in dy.data.iter_mut().zip(act) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        if let (Some(norm), Some(nc)) = (self.norm.as_mut(), cache.norm.as_ref()) {
            norm.backward(nc, &mut dy);
        }
        self.conv.backward(&cache.conv, &dy, input_grad)
    }

    pub fn push_params<'a>(&'a mut self, prefix: &str, out: &mut ParamsMut<'a, T>) {
        out.push((alloc::format!("{prefix}.conv.weight"), &mut self.conv.weight));
        if let Some(b) = self.conv.bias.as_mut() {
            out.push((alloc::format!("{prefix}.conv.bias"), b));
        }
        if let Some(n) = self.norm.as_mut() {
            out.push((alloc::format!("{prefix}.norm.gamma"), &mut n.gamma));
            out.push((alloc::format!("{prefix}.norm.beta"), &mut n.beta));
        }
    }
}

/// Runs blocks in order, optionally keeping caches for backward.
pub(crate) fn forward_chain<T: Real>(
    blocks: &[Block<T>],
    x: FeatureMap<T>,
    keep_cache: bool,
) -> (FeatureMap<T>, Vec<BlockCache<T>>) {
    let mut caches = Vec::new();
    let mut h = x;
    for b in blocks {
        let (y, c) = b.forward(&h, keep_cache);
        if let Some(c) = c {
            caches.push(c);
        }
        h = y;
    }
    (h, caches)
}

/// Backward through a chain; returns the gradient at the chain input when requested.
pub(crate) fn backward_chain<T: Real>(
    blocks: &mut [Block<T>],
    caches: &[BlockCache<T>],
    dy: FeatureMap<T>,
    input_grad: bool,
) -> Option<FeatureMap<T>> {
    let mut g = Some(dy);
    for (i, (b, c)) in blocks.iter_mut().zip(caches).enumerate().rev() {
        let need = input_grad || i > 0;
        g = b.backward(c, g.expect("gradient flows until the first block"), need);
    }
    g
}

pub(crate) fn chain_params<'a, T: Real>(blocks: &'a mut [Block<T>], prefix: &str, out: &mut ParamsMut<'a, T>) {
    for (i, b) in blocks.iter_mut().enumerate() {
        let name: String = alloc::format!("{prefix}.{i}");
        b.push_params(&name, out);
    }
}
