//! Overlap measures and one-hot encoding.
//!
//! Dice uses the soft form `2·Σ(aᵢbᵢ) / (Σaᵢ² + Σbᵢ²)`, which equals the
//! usual count form on binary indicators. Two empty inputs score 1.

use alloc::vec::Vec;

use crate::volume::{SoftMask, VolumetricMask};
use crate::{Error, Result};

/// Anything that exposes per-foreground-class values on a voxel grid.
pub trait ClassChannels {
    fn grid_dims(&self) -> [usize; 3];
    fn foreground_channels(&self) -> usize;
    /// Value of foreground channel `channel` (label `channel + 1`) at voxel `index`.
    fn value(&self, channel: usize, index: usize) -> f64;
}

impl ClassChannels for VolumetricMask {
    fn grid_dims(&self) -> [usize; 3] {
        self.dims()
    }

    fn foreground_channels(&self) -> usize {
        usize::from(self.num_classes()) - 1
    }

    #[inline]
    fn value(&self, channel: usize, index: usize) -> f64 {
        if usize::from(self.labels()[index]) == channel + 1 {
            1.0
        } else {
            0.0
        }
    }
}

impl ClassChannels for SoftMask {
    fn grid_dims(&self) -> [usize; 3] {
        self.dims()
    }

    fn foreground_channels(&self) -> usize {
        self.channels()
    }

    #[inline]
    fn value(&self, channel: usize, index: usize) -> f64 {
        f64::from(self.data()[channel * self.voxels() + index])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassDice {
    /// Dice per foreground class, label 1 first.
    pub per_class: Vec<f64>,
    pub mean: f64,
}

/// Dice from the three accumulated sums; the empty/empty case scores 1.
#[inline]
pub fn dice_from_sums(intersection: f64, sum_sq_a: f64, sum_sq_b: f64) -> f64 {
    let denom = sum_sq_a + sum_sq_b;
    if denom == 0.0 {
        1.0
    } else {
        2.0 * intersection / denom
    }
}

fn check_pair<A: ClassChannels + ?Sized, B: ClassChannels + ?Sized>(a: &A, b: &B) -> Result<()> {
    if a.grid_dims() != b.grid_dims() {
        return Err(Error::invalid("dice operands have different dims"));
    }
    if a.foreground_channels() != b.foreground_channels() {
        return Err(Error::invalid("dice operands have different class counts"));
    }
    Ok(())
}

fn channel_dice<A: ClassChannels + ?Sized, B: ClassChannels + ?Sized>(a: &A, b: &B, channel: usize) -> f64 {
    let n: usize = a.grid_dims().iter().product();
    let (mut inter, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let va = a.value(channel, i);
        let vb = b.value(channel, i);
        inter += va * vb;
        sa += va * va;
        sb += vb * vb;
    }
    dice_from_sums(inter, sa, sb)
}

/// Dice of foreground class 1.
pub fn dice_coefficient<A: ClassChannels + ?Sized, B: ClassChannels + ?Sized>(a: &A, b: &B) -> Result<f64> {
    check_pair(a, b)?;
    Ok(channel_dice(a, b, 0))
}

/// Dice of each foreground class computed independently, plus their mean.
pub fn multiclass_dice<A: ClassChannels + ?Sized, B: ClassChannels + ?Sized>(
    a: &A,
    b: &B,
    num_classes: usize,
) -> Result<MulticlassDice> {
    if num_classes < 2 {
        return Err(Error::invalid("multiclass dice needs at least two classes"));
    }
    check_pair(a, b)?;
    if a.foreground_channels() != num_classes - 1 {
        return Err(Error::invalid("operands do not have the requested class count"));
    }
    let per_class: Vec<f64> = (0..num_classes - 1).map(|c| channel_dice(a, b, c)).collect();
    let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(MulticlassDice { per_class, mean })
}

/// Label-mask Dice specialised to byte comparisons; same result as
/// [`multiclass_dice`] on two [`VolumetricMask`]s, without the generic
/// per-voxel dispatch.
pub fn label_dice(a: &VolumetricMask, b: &VolumetricMask) -> Result<MulticlassDice> {
    check_pair(a, b)?;
    let k = usize::from(a.num_classes());
    let mut inter = alloc::vec![0usize; k];
    let mut ca = alloc::vec![0usize; k];
    let mut cb = alloc::vec![0usize; k];
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        ca[usize::from(la)] += 1;
        cb[usize::from(lb)] += 1;
        if la == lb {
            inter[usize::from(la)] += 1;
        }
    }
    let per_class: Vec<f64> = (1..k)
        .map(|c| dice_from_sums(inter[c] as f64, ca[c] as f64, cb[c] as f64))
        .collect();
    let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(MulticlassDice { per_class, mean })
}

/// One indicator channel per foreground label.
pub fn one_hot_encode(mask: &VolumetricMask) -> SoftMask {
    let channels = usize::from(mask.num_classes()) - 1;
    let n = mask.len();
    let mut data = alloc::vec![0.0f32; channels * n];
    for (i, &l) in mask.labels().iter().enumerate() {
        if l != 0 {
            data[(usize::from(l) - 1) * n + i] = 1.0;
        }
    }
    SoftMask::new(channels, mask.dims(), mask.spacing(), data).expect("indicator values are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mask_with(dims: [usize; 3], classes: u16, set: &[(usize, u8)]) -> VolumetricMask {
        let mut data = vec![0u8; dims.iter().product()];
        for &(i, l) in set {
            data[i] = l;
        }
        VolumetricMask::new(dims, [1.0; 3], classes, data).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = mask_with([4, 4, 4], 2, &[(0, 1), (5, 1)]);
        let b = mask_with([4, 4, 4], 2, &[(9, 1)]);
        assert_eq!(dice_coefficient(&a, &a).unwrap(), 1.0);
        assert_eq!(dice_coefficient(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn eight_versus_four_subset() {
        let eight: Vec<(usize, u8)> = (0..8).map(|i| (i, 1)).collect();
        let four: Vec<(usize, u8)> = (0..4).map(|i| (i, 1)).collect();
        let a = mask_with([4, 4, 4], 2, &eight);
        let b = mask_with([4, 4, 4], 2, &four);
        let d = dice_coefficient(&a, &b).unwrap();
        assert!((d - 2.0 * 4.0 / 12.0).abs() < 1e-12);
        assert!((d - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn empty_pair_scores_one_and_empty_vs_full_zero() {
        let e = mask_with([2, 2, 2], 2, &[]);
        let f = mask_with([2, 2, 2], 2, &[(3, 1)]);
        assert_eq!(dice_coefficient(&e, &e).unwrap(), 1.0);
        assert_eq!(dice_coefficient(&e, &f).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = mask_with([2, 2, 2], 2, &[]);
        let b = mask_with([2, 2, 3], 2, &[]);
        assert!(matches!(dice_coefficient(&a, &b), Err(Error::InvalidArgument(_))));
        let c = mask_with([2, 2, 2], 3, &[]);
        assert!(multiclass_dice(&a, &c, 2).is_err());
        assert!(multiclass_dice(&a, &a, 3).is_err());
    }

    #[test]
    fn multiclass_cases() {
        let a = mask_with([4, 1, 1], 3, &[(0, 1), (1, 2)]);
        let r = multiclass_dice(&a, &a, 3).unwrap();
        assert_eq!(r.per_class, vec![1.0, 1.0]);
        assert_eq!(r.mean, 1.0);

        let b = mask_with([4, 1, 1], 3, &[(0, 1), (2, 2)]);
        let r = multiclass_dice(&a, &b, 3).unwrap();
        assert_eq!(r.per_class, vec![1.0, 0.0]);
        assert_eq!(r.mean, 0.5);
        assert_eq!(label_dice(&a, &b).unwrap(), r);

        let e = mask_with([4, 1, 1], 3, &[]);
        let r = multiclass_dice(&e, &e, 3).unwrap();
        assert_eq!(r.per_class, vec![1.0, 1.0]);
    }

    #[test]
    fn soft_and_hard_operands_mix() {
        let hard = mask_with([2, 1, 1], 2, &[(0, 1)]);
        let soft = SoftMask::new(1, [2, 1, 1], [1.0; 3], vec![0.5, 0.5]).unwrap();
        // 2·0.5 / (1 + 0.5)
        let d = dice_coefficient(&hard, &soft).unwrap();
        assert!((d - 1.0 / 1.5).abs() < 1e-12);
        assert_eq!(d, dice_coefficient(&soft, &hard).unwrap());
    }

    #[test]
    fn one_hot_channels() {
        let binary = mask_with([3, 1, 1], 2, &[(1, 1)]);
        let oh = one_hot_encode(&binary);
        assert_eq!(oh.channels(), 1);
        assert_eq!(oh.data(), &[0.0, 1.0, 0.0]);

        let three = mask_with([3, 1, 1], 3, &[(1, 1), (2, 2)]);
        let oh = one_hot_encode(&three);
        assert_eq!(oh.channels(), 2);
        for c in 0..2 {
            assert_eq!(oh.channel(c).iter().sum::<f32>(), 1.0);
        }
    }
}
