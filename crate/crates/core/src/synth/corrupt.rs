use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::morphology::{inner_distance, outer_distance};
use crate::dice::label_dice;
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::volume::VolumetricMask;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionOperator {
    /// Erosion by `round(severity·depth)` voxels, `depth` being the deepest
    /// city-block distance to the boundary; severity 1 empties the mask.
    Erode,
    /// Dilation by `round(severity·depth)` voxels.
    Dilate,
    /// Spherical holes until a `severity` fraction of the foreground is removed.
    PunchHoles,
    /// A spurious sphere of volume `3·severity` times the foreground, grown
    /// outward from a random surface voxel.
    AddFalseBlob,
    /// Random flips with probability `severity/2` in a boundary band of
    /// width `1 + round(2·severity)`.
    BoundaryJitter,
    /// Removes the `severity` fraction of the foreground lying beyond a
    /// random cutting plane.
    DropComponent,
}

impl CorruptionOperator {
    pub const ALL: [CorruptionOperator; 6] = [
        CorruptionOperator::Erode,
        CorruptionOperator::Dilate,
        CorruptionOperator::PunchHoles,
        CorruptionOperator::AddFalseBlob,
        CorruptionOperator::BoundaryJitter,
        CorruptionOperator::DropComponent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionOperator::Erode => "erode",
            CorruptionOperator::Dilate => "dilate",
            CorruptionOperator::PunchHoles => "punch_holes",
            CorruptionOperator::AddFalseBlob => "add_false_blob",
            CorruptionOperator::BoundaryJitter => "boundary_jitter",
            CorruptionOperator::DropComponent => "drop_component",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub operator: CorruptionOperator,
    /// In `[0, 1]`; 0 leaves the mask unchanged.
    pub severity: f64,
    pub seed: u64,
}

/// A corrupted mask and its exact Dice against the original.
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub mask: VolumetricMask,
    /// Mean Dice over foreground classes.
    pub real_dice: f64,
    pub per_class_dice: Vec<f64>,
    /// The corrupted mask has no foreground voxel.
    pub empty: bool,
}

fn corrupt_region(inside: &[bool], dims: [usize; 3], spec: &CorruptionSpec, rng: &mut SeededRng) -> Vec<bool> {
    let s = spec.severity;
    if s == 0.0 {
        return inside.to_vec();
    }
    let volume = inside.iter().filter(|&&b| b).count();
    let depth = || -> u32 { inner_distance(inside, dims).into_iter().max().unwrap_or(0) };
    match spec.operator {
        CorruptionOperator::Erode => {
            let k = libm::round(s * f64::from(depth())) as u32;
            inner_distance(inside, dims).into_iter().map(|d| d > k).collect()
        }
        CorruptionOperator::Dilate => {
            let k = libm::round(s * f64::from(depth())) as u32;
            outer_distance(inside, dims).into_iter().map(|d| d <= k).collect()
        }
        CorruptionOperator::PunchHoles => punch_holes(inside, dims, s, volume, f64::from(depth()), rng),
        CorruptionOperator::AddFalseBlob => {
            let blob_volume = 3.0 * s * volume as f64;
            let r = libm::cbrt(3.0 * blob_volume / (4.0 * PI));
            let inner = inner_distance(inside, dims);
            let surface: Vec<usize> = (0..inside.len()).filter(|&i| inner[i] == 1).collect();
            let anchor = surface[rng.random_range(0..surface.len())];
            let [nx, ny, _] = dims;
            let p = [(anchor % nx) as f64, ((anchor / nx) % ny) as f64, (anchor / (nx * ny)) as f64];
            let dir = super::shapes_direction(rng);
            let centroid = centroid_of(inside, dims);
            // push the blob center outward so the blob leaks from the surface
            let out = [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]];
            let sign = if dir[0] * out[0] + dir[1] * out[1] + dir[2] * out[2] < 0.0 { -1.0 } else { 1.0 };
            let center: [f64; 3] = core::array::from_fn(|a| p[a] + sign * dir[a] * 0.75 * r);
            let mut region = inside.to_vec();
            paint_ball(&mut region, dims, center, r, true);
            region
        }
        CorruptionOperator::BoundaryJitter => {
            let width = 1 + libm::round(2.0 * s) as u32;
            let inner = inner_distance(inside, dims);
            let outer = outer_distance(inside, dims);
            let p = 0.5 * s;
            (0..inside.len())
                .map(|i| {
                    let in_band = if inside[i] { inner[i] <= width } else { outer[i] <= width };
                    if in_band && rng.random_bool(p) {
                        !inside[i]
                    } else {
                        inside[i]
                    }
                })
                .collect()
        }
        CorruptionOperator::DropComponent => {
            if s >= 1.0 {
                return alloc::vec![false; inside.len()];
            }
            let dir = super::shapes_direction(rng);
            let [nx, ny, _] = dims;
            let proj = |i: usize| {
                let p = [(i % nx) as f64, ((i / nx) % ny) as f64, (i / (nx * ny)) as f64];
                dir[0] * p[0] + dir[1] * p[1] + dir[2] * p[2]
            };
            let mut values: Vec<f64> = (0..inside.len()).filter(|&i| inside[i]).map(proj).collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite projections"));
            let drop = libm::round(s * volume as f64) as usize;
            if drop == 0 {
                return inside.to_vec();
            }
            let threshold = values[volume - drop];
            (0..inside.len()).map(|i| inside[i] && proj(i) < threshold).collect()
        }
    }
}

fn centroid_of(inside: &[bool], dims: [usize; 3]) -> [f64; 3] {
    let [nx, ny, _] = dims;
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for i in (0..inside.len()).filter(|&i| inside[i]) {
        sum[0] += (i % nx) as f64;
        sum[1] += ((i / nx) % ny) as f64;
        sum[2] += (i / (nx * ny)) as f64;
        n += 1.0;
    }
    sum.map(|v| v / n)
}

fn paint_ball(region: &mut [bool], dims: [usize; 3], center: [f64; 3], r: f64, value: bool) {
    let [nx, ny, nz] = dims;
    let lo: [usize; 3] = core::array::from_fn(|a| libm::floor(center[a] - r).max(0.0) as usize);
    let hi: [usize; 3] = core::array::from_fn(|a| (libm::ceil(center[a] + r).max(0.0) as usize).min(dims[a] - 1));
    let r2 = r * r;
    for z in lo[2]..=hi[2].min(nz - 1) {
        for y in lo[1]..=hi[1].min(ny - 1) {
            for x in lo[0]..=hi[0].min(nx - 1) {
                let d = [x as f64 - center[0], y as f64 - center[1], z as f64 - center[2]];
                if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r2 {
                    region[x + nx * (y + ny * z)] = value;
                }
            }
        }
    }
}

fn punch_holes(inside: &[bool], dims: [usize; 3], s: f64, volume: usize, depth: f64, rng: &mut SeededRng) -> Vec<bool> {
    if s >= 1.0 {
        return alloc::vec![false; inside.len()];
    }
    let [nx, ny, _] = dims;
    let target = libm::ceil(s * volume as f64) as usize;
    let radius = (0.4 * depth).max(1.0);
    let mut out = inside.to_vec();
    let mut remaining = volume;
    let members: Vec<usize> = (0..inside.len()).filter(|&i| inside[i]).collect();
    let mut guard = 0;
    while volume - remaining < target && guard < 100_000 {
        guard += 1;
        let c = members[rng.random_range(0..members.len())];
        if !out[c] {
            continue;
        }
        let center = [(c % nx) as f64, ((c / nx) % ny) as f64, (c / (nx * ny)) as f64];
        paint_ball(&mut out, dims, center, radius, false);
        remaining = out.iter().filter(|&&b| b).count();
    }
    out
}

/// Applies `spec` to every foreground class independently and recomposes
/// the labels (higher labels painted last).
///
/// The returned Dice is computed against the input with
/// [`crate::dice::label_dice`], so it is exact for the produced mask.
pub fn corrupt(mask: &VolumetricMask, spec: &CorruptionSpec) -> Result<Corruption> {
    if !(0.0..=1.0).contains(&spec.severity) {
        return Err(Error::invalid("severity must lie in [0, 1]"));
    }
    if !mask.has_foreground() {
        return Err(Error::EmptyMask);
    }
    let dims = mask.dims();
    let mut labels = alloc::vec![0u8; mask.len()];
    for class in 1..mask.num_classes() {
        let class = class as u8;
        let inside: Vec<bool> = mask.labels().iter().map(|&l| l == class).collect();
        if !inside.contains(&true) {
            continue;
        }
        let mut rng = seeded(derive_seed(spec.seed, u64::from(class)));
        for (l, keep) in labels.iter_mut().zip(corrupt_region(&inside, dims, spec, &mut rng)) {
            if keep {
                *l = class;
            }
        }
    }
    let corrupted = mask.with_labels(labels)?;
    let dice = label_dice(mask, &corrupted)?;
    let empty = !corrupted.has_foreground();
    Ok(Corruption { mask: corrupted, real_dice: dice.mean, per_class_dice: dice.per_class, empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dice::{dice_coefficient, multiclass_dice};
    use crate::synth::{generate_shapes, sphere, ShapeSpec};

    fn solid_cube() -> VolumetricMask {
        VolumetricMask::from_fn([14; 3], [1.0; 3], 2, |x, y, z| u8::from([x, y, z].iter().all(|v| (2..12).contains(v))))
            .unwrap()
    }

    #[test]
    fn severity_zero_is_identity() {
        let m = sphere(24, 7.0);
        for operator in CorruptionOperator::ALL {
            let c = corrupt(&m, &CorruptionSpec { operator, severity: 0.0, seed: 1 }).unwrap();
            assert_eq!(c.mask, m);
            assert_eq!(c.real_dice, 1.0);
        }
    }

    #[test]
    fn erode_cube_by_one_voxel() {
        let m = solid_cube();
        // depth 5, so severity 0.2 is one erosion step
        let c = corrupt(&m, &CorruptionSpec { operator: CorruptionOperator::Erode, severity: 0.2, seed: 0 }).unwrap();
        assert_eq!(c.mask.foreground_count(), 512);
        let want = 2.0 * 512.0 / (1000.0 + 512.0);
        assert!((c.real_dice - want).abs() < 1e-12);
        assert!((c.real_dice - 0.6772).abs() < 1e-4);
    }

    #[test]
    fn full_erosion_empties() {
        let m = solid_cube();
        let c = corrupt(&m, &CorruptionSpec { operator: CorruptionOperator::Erode, severity: 1.0, seed: 0 }).unwrap();
        assert!(c.empty);
        assert_eq!(c.real_dice, 0.0);
    }

    #[test]
    fn rejects_bad_severity_and_empty_input() {
        let m = solid_cube();
        for s in [-0.1, 1.1, f64::NAN] {
            assert!(corrupt(&m, &CorruptionSpec { operator: CorruptionOperator::Dilate, severity: s, seed: 0 }).is_err());
        }
        let e = VolumetricMask::zeros([4; 3], [1.0; 3], 2).unwrap();
        let spec = CorruptionSpec { operator: CorruptionOperator::Dilate, severity: 0.5, seed: 0 };
        assert_eq!(corrupt(&e, &spec).unwrap_err(), Error::EmptyMask);
    }

    #[test]
    fn returned_dice_matches_independent_recomputation() {
        let masks = generate_shapes(&ShapeSpec { grid: [40; 3], size_range_voxels: (9.0, 12.0), ..ShapeSpec::default() }, 3).unwrap();
        for (i, m) in masks.iter().enumerate() {
            for operator in CorruptionOperator::ALL {
                for severity in [0.1, 0.4, 0.8] {
                    let c = corrupt(m, &CorruptionSpec { operator, severity, seed: i as u64 }).unwrap();
                    let d = dice_coefficient(m, &c.mask).unwrap();
                    assert!((d - c.real_dice).abs() < 1e-9, "{operator:?} {severity}");
                }
            }
        }
    }

    #[test]
    fn erode_and_dilate_are_monotone() {
        let m = &generate_shapes(&ShapeSpec { grid: [40; 3], size_range_voxels: (9.0, 12.0), seed: 9, ..ShapeSpec::default() }, 1).unwrap()[0];
        for operator in [CorruptionOperator::Erode, CorruptionOperator::Dilate] {
            let mut prev = 1.0;
            for step in 0..=10 {
                let c = corrupt(m, &CorruptionSpec { operator, severity: step as f64 / 10.0, seed: 0 }).unwrap();
                assert!(c.real_dice <= prev + 1e-12, "{operator:?}");
                prev = c.real_dice;
            }
        }
    }

    #[test]
    fn multiclass_corruption_reports_per_class_dice() {
        let spec = ShapeSpec { grid: [40; 3], size_range_voxels: (9.0, 12.0), inclusion: Some(Default::default()), ..ShapeSpec::default() };
        let m = &generate_shapes(&spec, 1).unwrap()[0];
        let c = corrupt(m, &CorruptionSpec { operator: CorruptionOperator::BoundaryJitter, severity: 0.6, seed: 2 }).unwrap();
        let oracle = multiclass_dice(m, &c.mask, 3).unwrap();
        assert_eq!(c.per_class_dice.len(), 2);
        for (a, b) in c.per_class_dice.iter().zip(&oracle.per_class) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
