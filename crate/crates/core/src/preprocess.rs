//! Mask preprocessing: isotropic resampling, centroid-cube cropping and
//! rotation/translation augmentation. Labels are resampled with nearest
//! neighbor so they stay integral.

use alloc::vec::Vec;

use rand::Rng;

use crate::rng::seeded;
use crate::volume::VolumetricMask;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub target_spacing_mm: f64,
    /// Edge length of the cropped cube fed to the networks. Power of two.
    pub cube_size: usize,
    pub rotation_degrees: Vec<f64>,
    pub max_translation_voxels: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_spacing_mm: 1.0,
            cube_size: 128,
            rotation_degrees: alloc::vec![-10.0, 0.0, 10.0],
            max_translation_voxels: 5,
        }
    }
}

impl PreprocessConfig {
    /// The 32³ configuration used for CPU-scale experiments.
    pub fn desk_scale() -> Self {
        Self { cube_size: 32, max_translation_voxels: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_spacing_mm > 0.0) || !self.target_spacing_mm.is_finite() {
            return Err(Error::invalid("target_spacing_mm must be positive"));
        }
        if self.cube_size == 0 || !self.cube_size.is_power_of_two() {
            return Err(Error::invalid("cube_size must be a power of two"));
        }
        if self.rotation_degrees.is_empty() {
            return Err(Error::invalid("rotation_degrees must not be empty"));
        }
        if self.rotation_degrees.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("rotation angles must be finite"));
        }
        Ok(())
    }
}

/// Resamples to isotropic `target_spacing_mm` voxels.
///
/// Output dims are `round(nᵢ·sᵢ/t)` (at least 1); each output voxel takes the
/// label of the input voxel containing its center.
pub fn resample_isotropic(mask: &VolumetricMask, target_spacing_mm: f64) -> Result<VolumetricMask> {
    if !(target_spacing_mm > 0.0) || !target_spacing_mm.is_finite() {
        return Err(Error::invalid("target spacing must be positive"));
    }
    let dims = mask.dims();
    let spacing = mask.spacing();
    let mut out_dims = [0usize; 3];
    let mut lookup: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..3 {
        let n = libm::round(dims[a] as f64 * spacing[a] / target_spacing_mm).max(1.0) as usize;
        out_dims[a] = n;
        lookup[a] = (0..n)
            .map(|o| {
                let pos = (o as f64 + 0.5) * target_spacing_mm;
                (libm::floor(pos / spacing[a]) as usize).min(dims[a] - 1)
            })
            .collect();
    }
    VolumetricMask::from_fn(out_dims, [target_spacing_mm; 3], mask.num_classes(), |x, y, z| {
        mask.get(lookup[0][x], lookup[1][y], lookup[2][z])
    })
}

/// Foreground centroid in voxel-index coordinates.
pub fn foreground_centroid(mask: &VolumetricMask) -> Result<[f64; 3]> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for (i, &l) in mask.labels().iter().enumerate() {
        if l != 0 {
            let c = mask.coords(i);
            for a in 0..3 {
                sum[a] += c[a] as f64;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum.map(|s| s / count as f64))
}

/// Crops the smallest cube centered at the foreground centroid that contains
/// every foreground voxel, then resizes it to `cube_size³`.
///
/// Regions of the cube outside the input grid are background. The output
/// spacing records the physical size of one cube voxel. If sampling misses
/// every foreground voxel, each one is written into the cell containing it
/// (highest label wins) so the output is never empty.
pub fn crop_to_centroid_cube(mask: &VolumetricMask, cube_size: usize) -> Result<VolumetricMask> {
    if cube_size == 0 {
        return Err(Error::invalid("cube_size must be positive"));
    }
    let centroid = foreground_centroid(mask)?;
    let mut half = 0.5f64;
    for (i, &l) in mask.labels().iter().enumerate() {
        if l != 0 {
            let c = mask.coords(i);
            for a in 0..3 {
                half = half.max((c[a] as f64 - centroid[a]).abs() + 0.5);
            }
        }
    }
    let step = 2.0 * half / cube_size as f64;
    let lookup: [Vec<isize>; 3] = core::array::from_fn(|a| {
        (0..cube_size)
            .map(|o| {
                let pos = centroid[a] - half + (o as f64 + 0.5) * step;
                libm::floor(pos + 0.5) as isize
            })
            .collect()
    });
    let spacing = mask.spacing().map(|s| s * step);
    let mut out = VolumetricMask::from_fn([cube_size; 3], spacing, mask.num_classes(), |x, y, z| {
        mask.get_or_background(lookup[0][x], lookup[1][y], lookup[2][z])
    })?;
    if !out.has_foreground() {
        // sparse foreground fell between sample points: splat it instead
        for (i, &l) in mask.labels().iter().enumerate() {
            if l != 0 {
                let c = mask.coords(i);
                let o: [usize; 3] = core::array::from_fn(|a| {
                    let t = (c[a] as f64 - (centroid[a] - half)) / step;
                    (libm::floor(t).max(0.0) as usize).min(cube_size - 1)
                });
                let cell = out.index(o[0], o[1], o[2]);
                if out.labels()[cell] < l {
                    out.set(o[0], o[1], o[2], l)?;
                }
            }
        }
    }
    Ok(out)
}

fn rotation_matrix(degrees: [f64; 3]) -> [[f64; 3]; 3] {
    let [ax, ay, az] = degrees.map(|d| d.to_radians());
    let (sx, cx) = (libm::sin(ax), libm::cos(ax));
    let (sy, cy) = (libm::sin(ay), libm::cos(ay));
    let (sz, cz) = (libm::sin(az), libm::cos(az));
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    matmul3(&rz, &matmul3(&ry, &rx))
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotates about the grid center by `degrees` around x, then y, then z.
/// Nearest-neighbor sampling; voxels mapped from outside the grid are background.
pub fn rotate(mask: &VolumetricMask, degrees: [f64; 3]) -> VolumetricMask {
    if degrees == [0.0; 3] {
        return mask.clone();
    }
    let r = rotation_matrix(degrees);
    let dims = mask.dims();
    let center = dims.map(|n| (n as f64 - 1.0) / 2.0);
    VolumetricMask::from_fn(dims, mask.spacing(), mask.num_classes(), |x, y, z| {
        let p = [x as f64 - center[0], y as f64 - center[1], z as f64 - center[2]];
        // inverse rotation = transpose
        let src: [isize; 3] = core::array::from_fn(|a| {
            let q = r[0][a] * p[0] + r[1][a] * p[1] + r[2][a] * p[2];
            libm::round(q + center[a]) as isize
        });
        mask.get_or_background(src[0], src[1], src[2])
    })
    .expect("rotation preserves geometry")
}

/// Shifts the labels by `offset` voxels, filling with background.
pub fn translate(mask: &VolumetricMask, offset: [isize; 3]) -> VolumetricMask {
    if offset == [0; 3] {
        return mask.clone();
    }
    VolumetricMask::from_fn(mask.dims(), mask.spacing(), mask.num_classes(), |x, y, z| {
        mask.get_or_background(x as isize - offset[0], y as isize - offset[1], z as isize - offset[2])
    })
    .expect("translation preserves geometry")
}

fn random_offset<R: Rng + ?Sized>(rng: &mut R, max: usize) -> [isize; 3] {
    let m = max as i64;
    core::array::from_fn(|_| if m == 0 { 0 } else { rng.random_range(-m..=m) as isize })
}

/// Every rotation triple from `rotation_degrees³` (x outermost), each followed
/// by a seed-determined translation.
pub fn augment(mask: &VolumetricMask, config: &PreprocessConfig, seed: u64) -> Result<Vec<VolumetricMask>> {
    config.validate()?;
    let mut rng = seeded(seed);
    let angles = &config.rotation_degrees;
    let mut out = Vec::with_capacity(angles.len().pow(3));
    for &rx in angles {
        for &ry in angles {
            for &rz in angles {
                let offset = random_offset(&mut rng, config.max_translation_voxels);
                out.push(translate(&rotate(mask, [rx, ry, rz]), offset));
            }
        }
    }
    Ok(out)
}

/// One augmentation variant drawn at random: a uniformly chosen rotation
/// triple and a uniform translation.
pub fn random_augmentation<R: Rng + ?Sized>(
    mask: &VolumetricMask,
    config: &PreprocessConfig,
    rng: &mut R,
) -> VolumetricMask {
    let angles = &config.rotation_degrees;
    let triple: [f64; 3] = core::array::from_fn(|_| angles[rng.random_range(0..angles.len())]);
    let offset = random_offset(rng, config.max_translation_voxels);
    translate(&rotate(mask, triple), offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn random_mask(dims: [usize; 3], seed: u64) -> VolumetricMask {
        let mut rng = seeded(seed);
        VolumetricMask::from_fn(dims, [1.0; 3], 2, |_, _, _| u8::from(rng.random_bool(0.3))).unwrap()
    }

    #[test]
    fn resample_identity() {
        let m = random_mask([10, 10, 10], 1);
        assert_eq!(resample_isotropic(&m, 1.0).unwrap(), m);
    }

    #[test]
    fn resample_upsamples_by_copying() {
        let m = random_mask([10, 10, 10], 2).with_spacing([2.0; 3]).unwrap();
        let up = resample_isotropic(&m, 1.0).unwrap();
        assert_eq!(up.dims(), [20, 20, 20]);
        assert_eq!(up.spacing(), [1.0; 3]);
        assert_eq!(up.foreground_count(), 8 * m.foreground_count());
        for z in 0..20 {
            for y in 0..20 {
                for x in 0..20 {
                    assert_eq!(up.get(x, y, z), m.get(x / 2, y / 2, z / 2));
                }
            }
        }
    }

    /// Nearest input voxel center, ties resolved toward the higher index.
    fn nearest_oracle(n_in: usize, s_in: f64, pos: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..n_in {
            let d = ((i as f64 + 0.5) * s_in - pos).abs();
            if d <= best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    #[test]
    fn resample_downsamples_to_nearest_voxel() {
        let m = random_mask([8, 8, 8], 3);
        let down = resample_isotropic(&m, 2.0).unwrap();
        assert_eq!(down.dims(), [4, 4, 4]);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    let src = [x, y, z].map(|o| nearest_oracle(8, 1.0, (o as f64 + 0.5) * 2.0));
                    assert_eq!(down.get(x, y, z), m.get(src[0], src[1], src[2]));
                }
            }
        }
    }

    #[test]
    fn resample_anisotropic_dims() {
        let m = VolumetricMask::zeros([10, 10, 4], [0.8, 0.8, 2.5], 2).unwrap();
        assert_eq!(resample_isotropic(&m, 1.0).unwrap().dims(), [8, 8, 10]);
        let tiny = VolumetricMask::zeros([1, 1, 1], [0.1; 3], 2).unwrap();
        assert_eq!(resample_isotropic(&tiny, 5.0).unwrap().dims(), [1, 1, 1]);
        assert!(resample_isotropic(&m, 0.0).is_err());
        assert!(resample_isotropic(&m, -1.0).is_err());
    }

    #[test]
    fn crop_single_center_voxel() {
        let mut m = VolumetricMask::zeros([64, 64, 64], [1.0; 3], 2).unwrap();
        m.set(32, 32, 32, 1).unwrap();
        let c = crop_to_centroid_cube(&m, 32).unwrap();
        assert_eq!(c.dims(), [32, 32, 32]);
        assert_eq!(c.get(16, 16, 16), 1);
    }

    #[test]
    fn crop_exact_fit_cube_fills_output() {
        let m = VolumetricMask::from_fn([64, 64, 64], [1.0; 3], 2, |x, y, z| {
            u8::from([x, y, z].iter().all(|&v| (24..40).contains(&v)))
        })
        .unwrap();
        let c = crop_to_centroid_cube(&m, 32).unwrap();
        // The 16³ block is exactly the centroid cube, so every resized voxel
        // samples inside it.
        assert_eq!(c.foreground_count(), 32 * 32 * 32);
    }

    #[test]
    fn crop_rejects_empty() {
        let m = VolumetricMask::zeros([8, 8, 8], [1.0; 3], 2).unwrap();
        assert_eq!(crop_to_centroid_cube(&m, 8).unwrap_err(), Error::EmptyMask);
    }

    #[test]
    fn augment_counts_and_identity() {
        let m = random_mask([8, 8, 8], 4);
        let cfg = PreprocessConfig { cube_size: 8, ..PreprocessConfig::default() };
        assert_eq!(augment(&m, &cfg, 0).unwrap().len(), 27);
        let id = PreprocessConfig {
            rotation_degrees: vec![0.0],
            max_translation_voxels: 0,
            ..cfg.clone()
        };
        let out = augment(&m, &id, 9).unwrap();
        assert_eq!(out, vec![m.clone()]);
        assert_eq!(augment(&m, &cfg, 5).unwrap(), augment(&m, &cfg, 5).unwrap());
    }

    #[test]
    fn rotation_by_ninety_degrees_permutes_axes() {
        let mut m = VolumetricMask::zeros([5, 5, 5], [1.0; 3], 2).unwrap();
        m.set(4, 2, 2, 1).unwrap();
        let r = rotate(&m, [0.0, 0.0, 90.0]);
        // +x maps to +y under a right-handed z rotation
        assert_eq!(r.get(2, 4, 2), 1);
        assert_eq!(r.foreground_count(), 1);
    }

    #[test]
    fn translation_shifts() {
        let mut m = VolumetricMask::zeros([4, 4, 4], [1.0; 3], 2).unwrap();
        m.set(1, 1, 1, 1).unwrap();
        let t = translate(&m, [1, -1, 2]);
        assert_eq!(t.get(2, 0, 3), 1);
        assert_eq!(t.foreground_count(), 1);
    }
}
