use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::morphology::{is_connected, largest_component};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::volume::VolumetricMask;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeFamily {
    Ellipsoid,
    /// A tapered tube along a circular arc.
    BentCapsule,
    /// An ellipsoidal core with spherical lobes on its surface.
    LobedBlob,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 3] = [ShapeFamily::Ellipsoid, ShapeFamily::BentCapsule, ShapeFamily::LobedBlob];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Ellipsoid => "ellipsoid",
            ShapeFamily::BentCapsule => "bent_capsule",
            ShapeFamily::LobedBlob => "lobed_blob",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// An inner structure of label 2 placed inside the main shape, standing in
/// for a small lesion with unstable shape and position.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionSpec {
    /// Radius range as a fraction of the main shape's size.
    pub radius_fraction: (f64, f64),
}

impl Default for InclusionSpec {
    fn default() -> Self {
        Self { radius_fraction: (0.2, 0.4) }
    }
}

/// Parameters of a synthetic shape population.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub family: ShapeFamily,
    pub grid: [usize; 3],
    pub spacing_mm: f64,
    /// Characteristic size in voxels: semi-major axis, half-length or core radius.
    pub size_range_voxels: (f64, f64),
    /// Ratio of minor to major extent.
    pub axis_ratio_range: (f64, f64),
    /// Arc angle of the bent capsule, radians.
    pub bend_range: (f64, f64),
    /// Number of lobes of the lobed blob, inclusive.
    pub lobe_count_range: (usize, usize),
    /// Maximum absolute rotation about each axis, degrees.
    pub max_rotation_degrees: f64,
    /// Maximum absolute offset of the shape center from the grid center.
    pub max_offset_voxels: f64,
    pub inclusion: Option<InclusionSpec>,
    pub seed: u64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        Self {
            family: ShapeFamily::BentCapsule,
            grid: [64, 64, 64],
            spacing_mm: 1.0,
            size_range_voxels: (14.0, 20.0),
            axis_ratio_range: (0.45, 0.7),
            bend_range: (0.4, 1.4),
            lobe_count_range: (2, 4),
            max_rotation_degrees: 15.0,
            max_offset_voxels: 4.0,
            inclusion: None,
            seed: 0,
        }
    }
}

impl ShapeSpec {
    pub fn num_classes(&self) -> u16 {
        if self.inclusion.is_some() {
            3
        } else {
            2
        }
    }

    fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !ordered(self.size_range_voxels) || !(self.size_range_voxels.0 > 0.0) {
            return Err(Error::invalid("size range must be positive and ordered"));
        }
        if !ordered(self.axis_ratio_range) || !(self.axis_ratio_range.0 > 0.0) {
            return Err(Error::invalid("axis ratio range must be positive and ordered"));
        }
        if !ordered(self.bend_range) || self.lobe_count_range.0 > self.lobe_count_range.1 {
            return Err(Error::invalid("bend and lobe ranges must be ordered"));
        }
        if self.grid.contains(&0) || !(self.spacing_mm > 0.0) {
            return Err(Error::invalid("grid and spacing must be positive"));
        }
        if let Some(inc) = &self.inclusion {
            if !ordered(inc.radius_fraction) || !(inc.radius_fraction.0 > 0.0) {
                return Err(Error::invalid("inclusion radius range must be positive and ordered"));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut SeededRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

type Vec3 = [f64; 3];

fn rotation(deg: Vec3) -> [[f64; 3]; 3] {
    let [a, b, c] = deg.map(|d| d.to_radians());
    let (sa, ca) = (libm::sin(a), libm::cos(a));
    let (sb, cb) = (libm::sin(b), libm::cos(b));
    let (sc, cc) = (libm::sin(c), libm::cos(c));
    // Rz·Ry·Rx
    [
        [cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa],
        [sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa],
        [-sb, cb * sa, cb * ca],
    ]
}

/// A solid described by an inside test in shape-local coordinates.
enum Solid {
    Ellipsoid { axes: Vec3 },
    Capsule { spine: Vec<Vec3>, radii: Vec<f64> },
    Lobed { core: Vec3, lobes: Vec<(Vec3, f64)> },
}

impl Solid {
    fn contains(&self, p: Vec3) -> bool {
        match self {
            Solid::Ellipsoid { axes } => ellipsoid_contains(*axes, p),
            Solid::Capsule { spine, radii } => spine.iter().zip(radii).any(|(c, &r)| dist2(*c, p) <= r * r),
            Solid::Lobed { core, lobes } => {
                ellipsoid_contains(*core, p) || lobes.iter().any(|(c, r)| dist2(*c, p) <= r * r)
            }
        }
    }

    /// Radius of a ball around the local origin containing the solid.
    fn extent(&self) -> f64 {
        match self {
            Solid::Ellipsoid { axes } => axes.iter().copied().fold(0.0, f64::max),
            Solid::Capsule { spine, radii } => spine
                .iter()
                .zip(radii)
                .map(|(c, r)| libm::sqrt(dist2(*c, [0.0; 3])) + r)
                .fold(0.0, f64::max),
            Solid::Lobed { core, lobes } => lobes
                .iter()
                .map(|(c, r)| libm::sqrt(dist2(*c, [0.0; 3])) + r)
                .fold(core.iter().copied().fold(0.0, f64::max), f64::max),
        }
    }
}

fn ellipsoid_contains(axes: Vec3, p: Vec3) -> bool {
    (0..3).map(|a| (p[a] / axes[a]) * (p[a] / axes[a])).sum::<f64>() <= 1.0
}

fn dist2(a: Vec3, b: Vec3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

fn random_direction(rng: &mut SeededRng) -> Vec3 {
    let u: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = libm::sqrt(1.0 - u * u);
    [s * libm::cos(phi), s * libm::sin(phi), u]
}

fn sample_solid(spec: &ShapeSpec, rng: &mut SeededRng) -> Solid {
    let size = uniform(rng, spec.size_range_voxels);
    match spec.family {
        ShapeFamily::Ellipsoid => Solid::Ellipsoid {
            axes: [size, size * uniform(rng, spec.axis_ratio_range), size * uniform(rng, spec.axis_ratio_range)],
        },
        ShapeFamily::BentCapsule => {
            let bend = uniform(rng, spec.bend_range);
            let thickness = size * uniform(rng, spec.axis_ratio_range) * 0.5;
            let taper = rng.random_range(0.45..0.8);
            let length = 2.0 * size - 2.0 * thickness;
            let n = 48;
            let mut spine = Vec::with_capacity(n);
            let mut radii = Vec::with_capacity(n);
            for i in 0..n {
                let t = i as f64 / (n - 1) as f64;
                let s = (t - 0.5) * length;
                let p = if bend.abs() < 1e-6 {
                    [s, 0.0, 0.0]
                } else {
                    let arc_r = length / bend;
                    let ang = s / arc_r;
                    [arc_r * libm::sin(ang), arc_r * (1.0 - libm::cos(ang)), 0.0]
                };
                spine.push(p);
                radii.push(thickness * (1.0 - (1.0 - taper) * t));
            }
            // center the spine on its centroid
            let c: Vec3 = core::array::from_fn(|a| spine.iter().map(|p| p[a]).sum::<f64>() / n as f64);
            spine.iter_mut().for_each(|p| (0..3).for_each(|a| p[a] -= c[a]));
            Solid::Capsule { spine, radii }
        }
        ShapeFamily::LobedBlob => {
            let core = [size * 0.75, size * 0.75 * libm::sqrt(uniform(rng, spec.axis_ratio_range)), size * 0.6];
            let count = rng.random_range(spec.lobe_count_range.0..=spec.lobe_count_range.1);
            let lobes = (0..count)
                .map(|_| {
                    let d = random_direction(rng);
                    let r = size * rng.random_range(0.3..0.45);
                    let c: Vec3 = core::array::from_fn(|a| d[a] * core[a] * 0.9);
                    (c, r)
                })
                .collect();
            Solid::Lobed { core, lobes }
        }
    }
}

fn rasterize(spec: &ShapeSpec, solid: &Solid, rot: &[[f64; 3]; 3], center: Vec3) -> Vec<bool> {
    let [nx, ny, nz] = spec.grid;
    let mut inside = alloc::vec![false; nx * ny * nz];
    let reach = solid.extent() + 1.0;
    let lo: [usize; 3] = core::array::from_fn(|a| libm::floor(center[a] - reach).max(0.0) as usize);
    let hi: [usize; 3] =
        core::array::from_fn(|a| (libm::ceil(center[a] + reach).max(0.0) as usize).min(spec.grid[a].saturating_sub(1)));
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let d = [x as f64 - center[0], y as f64 - center[1], z as f64 - center[2]];
                // local = Rᵀ·d
                let p: Vec3 = core::array::from_fn(|a| rot[0][a] * d[0] + rot[1][a] * d[1] + rot[2][a] * d[2]);
                if solid.contains(p) {
                    inside[x + nx * (y + ny * z)] = true;
                }
            }
        }
    }
    inside
}

fn generate_one(spec: &ShapeSpec, index: usize) -> Result<VolumetricMask> {
    let mut rng = seeded(derive_seed(spec.seed, index as u64));
    let solid = sample_solid(spec, &mut rng);
    let m = spec.max_rotation_degrees;
    let angles: Vec3 = core::array::from_fn(|_| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 });
    let rot = rotation(angles);
    let o = spec.max_offset_voxels;
    let center: Vec3 = core::array::from_fn(|a| {
        (spec.grid[a] as f64 - 1.0) / 2.0 + if o > 0.0 { rng.random_range(-o..=o) } else { 0.0 }
    });
    let inside = largest_component(&rasterize(spec, &solid, &rot, center), spec.grid);
    let mut labels: Vec<u8> = inside.iter().map(|&b| u8::from(b)).collect();
    if !labels.contains(&1) {
        return Err(Error::Generation(alloc::format!("shape {index} is empty")));
    }
    if let Some(inc) = &spec.inclusion {
        place_inclusion(&mut labels, spec, inc, &mut rng)?;
    }
    VolumetricMask::new(spec.grid, [spec.spacing_mm; 3], spec.num_classes(), labels)
}

fn place_inclusion(labels: &mut [u8], spec: &ShapeSpec, inc: &InclusionSpec, rng: &mut SeededRng) -> Result<()> {
    let [nx, ny, _] = spec.grid;
    let organ: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let size = uniform(rng, spec.size_range_voxels);
    let r = (size * uniform(rng, inc.radius_fraction)).max(1.0);
    let c = organ[rng.random_range(0..organ.len())];
    let center = [(c % nx) as f64, ((c / nx) % ny) as f64, (c / (nx * ny)) as f64];
    let stretch: Vec3 = core::array::from_fn(|_| rng.random_range(0.7..1.3));
    for &i in &organ {
        let p = [(i % nx) as f64, ((i / nx) % ny) as f64, (i / (nx * ny)) as f64];
        let d: f64 = (0..3).map(|a| { let t = (p[a] - center[a]) / (r * stretch[a]); t * t }).sum();
        if d <= 1.0 {
            labels[i] = 2;
        }
    }
    if !labels.contains(&2) {
        labels[c] = 2;
    }
    Ok(())
}

/// `count` seed-deterministic masks; mask `i` depends only on `(spec, i)`.
///
/// Every mask is non-empty and 6-connected (the largest component is kept).
pub fn generate_shapes(spec: &ShapeSpec, count: usize) -> Result<Vec<VolumetricMask>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    (0..count).map(|i| generate_one(spec, i)).collect()
}

/// Whether the foreground (all non-zero labels) forms one 6-connected component.
pub fn foreground_connected(mask: &VolumetricMask) -> bool {
    let region: Vec<bool> = mask.labels().iter().map(|&l| l != 0).collect();
    is_connected(&region, mask.dims())
}

/// A sphere of `radius` voxels centered in a cubic grid of edge `n`.
pub fn sphere(n: usize, radius: f64) -> VolumetricMask {
    let spec = ShapeSpec {
        family: ShapeFamily::Ellipsoid,
        grid: [n; 3],
        size_range_voxels: (radius, radius),
        axis_ratio_range: (1.0, 1.0),
        max_rotation_degrees: 0.0,
        max_offset_voxels: 0.0,
        ..ShapeSpec::default()
    };
    generate_one(&spec, 0).expect("sphere fits the grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipsoid_volume_matches_analytic() {
        for r in [8.0, 12.0, 16.0] {
            let m = sphere(48, r);
            let analytic = 4.0 / 3.0 * PI * r * r * r;
            let rel = (m.foreground_count() as f64 - analytic).abs() / analytic;
            assert!(rel < 0.05, "r={r}: {} vs {analytic}", m.foreground_count());
        }
    }

    #[test]
    fn families_are_connected_nonempty_and_deterministic() {
        for family in ShapeFamily::ALL {
            let spec = ShapeSpec { family, grid: [40; 3], size_range_voxels: (8.0, 12.0), seed: 3, ..ShapeSpec::default() };
            let a = generate_shapes(&spec, 6).unwrap();
            assert_eq!(a, generate_shapes(&spec, 6).unwrap());
            for m in &a {
                assert!(m.foreground_count() > 50, "{family:?}");
                assert!(foreground_connected(m));
            }
            assert_ne!(a[0], a[1]);
        }
    }

    #[test]
    fn inclusion_adds_second_class() {
        let spec = ShapeSpec { grid: [40; 3], size_range_voxels: (9.0, 12.0), inclusion: Some(InclusionSpec::default()), ..ShapeSpec::default() };
        for m in generate_shapes(&spec, 4).unwrap() {
            assert_eq!(m.num_classes(), 3);
            assert!(m.count_label(2) > 0);
            assert!(m.count_label(1) > m.count_label(2));
        }
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate_shapes(&ShapeSpec::default(), 0).is_err());
        let bad = ShapeSpec { size_range_voxels: (5.0, 1.0), ..ShapeSpec::default() };
        assert!(generate_shapes(&bad, 1).is_err());
        let tiny = ShapeSpec { size_range_voxels: (0.01, 0.01), max_offset_voxels: 0.0, grid: [4; 3], ..ShapeSpec::default() };
        // a 0.01-voxel shape between voxel centers rasterizes to nothing
        let tiny = ShapeSpec { family: ShapeFamily::Ellipsoid, ..tiny };
        assert!(matches!(generate_shapes(&tiny, 1), Err(Error::Generation(_))));
    }
}
