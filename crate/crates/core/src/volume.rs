//! Labeled and probabilistic voxel grids.
//!
//! Voxels are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A labeled 3D voxel grid with physical spacing in millimeters.
///
/// Label 0 is background; every label is below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumetricMask {
    data: Vec<u8>,
    dims: [usize; 3],
    spacing: [f64; 3],
    num_classes: u16,
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid("every dimension must be at least 1"));
    }
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid("spacing components must be positive and finite"));
    }
    Ok(())
}

impl VolumetricMask {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], num_classes: u16, data: Vec<u8>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        if !(2..=256).contains(&num_classes) {
            return Err(Error::invalid("num_classes must lie in 2..=256"));
        }
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid("label buffer length does not match dims"));
        }
        if let Some(bad) = data.iter().find(|&&l| u16::from(l) >= num_classes) {
            return Err(Error::invalid(alloc::format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { data, dims, spacing, num_classes })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], num_classes: u16) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, num_classes, vec![0; n])
    }

    /// Builds a mask by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        num_classes: u16,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, num_classes, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }

    /// Label at signed coordinates; out-of-bounds reads are background.
    #[inline]
    pub fn get_or_background(&self, x: isize, y: isize, z: isize) -> u8 {
        if x < 0 || y < 0 || z < 0 {
            return 0;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return 0;
        }
        self.get(x, y, z)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) -> Result<()> {
        if u16::from(label) >= self.num_classes {
            return Err(Error::invalid("label out of range"));
        }
        let i = self.index(x, y, z);
        self.data[i] = label;
        Ok(())
    }

    /// Coordinates of a linear index.
    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&l| l != 0).count()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }

    pub fn has_foreground(&self) -> bool {
        self.data.iter().any(|&l| l != 0)
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        check_geometry(self.dims, spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    /// Same geometry and class count, new labels. Labels are validated.
    pub fn with_labels(&self, data: Vec<u8>) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.num_classes, data)
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.data
    }
}

/// Per-class foreground probabilities, one channel per foreground class.
///
/// Channel `c` corresponds to label `c + 1`; background has no channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    channels: usize,
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f32>,
}

impl SoftMask {
    pub fn new(channels: usize, dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        if channels == 0 {
            return Err(Error::invalid("soft mask needs at least one channel"));
        }
        if data.len() != channels * dims.iter().product::<usize>() {
            return Err(Error::invalid("probability buffer length does not match shape"));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        Ok(Self { channels, dims, spacing, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    /// Hard labels: the most probable foreground class where its probability
    /// is at least 0.5, background elsewhere.
    pub fn to_labels(&self) -> VolumetricMask {
        let n = self.voxels();
        let labels = (0..n)
            .map(|i| {
                let mut best = 0u8;
                let mut best_p = 0.5f32;
                for c in 0..self.channels {
                    let p = self.data[c * n + i];
                    if p >= best_p && (best == 0 || p > best_p) {
                        best = (c + 1) as u8;
                        best_p = p;
                    }
                }
                best
            })
            .collect();
        VolumetricMask::new(self.dims, self.spacing, (self.channels + 1) as u16, labels)
            .expect("argmax labels are within range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_labels() {
        let err = VolumetricMask::new([2, 1, 1], [1.0; 3], 2, vec![0, 2]).unwrap_err();
        assert_eq!(err.kind(), "invalid_argument");
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(VolumetricMask::zeros([0, 1, 1], [1.0; 3], 2).is_err());
        assert!(VolumetricMask::zeros([1, 1, 1], [1.0, 0.0, 1.0], 2).is_err());
        assert!(SoftMask::new(1, [1, 1, 1], [1.0; 3], vec![1.5]).is_err());
    }

    #[test]
    fn index_and_coords_agree() {
        let m = VolumetricMask::zeros([3, 4, 5], [1.0; 3], 2).unwrap();
        for i in 0..m.len() {
            let [x, y, z] = m.coords(i);
            assert_eq!(m.index(x, y, z), i);
        }
    }

    #[test]
    fn soft_to_labels_thresholds() {
        let s = SoftMask::new(2, [3, 1, 1], [1.0; 3], vec![0.9, 0.2, 0.6, 0.1, 0.4, 0.7]).unwrap();
        assert_eq!(s.to_labels().labels(), &[1, 0, 2]);
    }
}
