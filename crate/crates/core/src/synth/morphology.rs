//! Binary morphology helpers on x-fastest voxel grids.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// City-block distance from each `inside` voxel to the nearest non-inside
/// voxel; voxels beyond the grid count as outside. Outside voxels get 0.
///
/// Repeated 6-neighborhood erosion by `k` keeps exactly the voxels with
/// distance greater than `k`.
pub fn inner_distance(inside: &[bool], dims: [usize; 3]) -> Vec<u32> {
    distance_transform(inside, dims, true)
}

/// City-block distance from each non-inside voxel to the nearest inside
/// voxel (`u32::MAX` when there is none). Inside voxels get 0.
pub fn outer_distance(inside: &[bool], dims: [usize; 3]) -> Vec<u32> {
    let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
    distance_transform(&outside, dims, false)
}

/// Two-pass chamfer transform with unit 6-neighborhood steps, which is exact
/// for the city-block metric. `border_is_zero` treats out-of-grid neighbors as
/// distance-0 seeds.
fn distance_transform(region: &[bool], dims: [usize; 3], border_is_zero: bool) -> Vec<u32> {
    const INF: u32 = u32::MAX / 2;
    let [nx, ny, nz] = dims;
    let border = if border_is_zero { 0 } else { INF };
    let mut d: Vec<u32> = region.iter().map(|&r| if r { INF } else { 0 }).collect();
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = idx(x, y, z);
                if d[i] == 0 {
                    continue;
                }
                let mut best = d[i];
                best = best.min(if x > 0 { d[i - 1] } else { border } + 1);
                best = best.min(if y > 0 { d[i - nx] } else { border } + 1);
                best = best.min(if z > 0 { d[i - nx * ny] } else { border } + 1);
                d[i] = best;
            }
        }
    }
    for z in (0..nz).rev() {
        for y in (0..ny).rev() {
            for x in (0..nx).rev() {
                let i = idx(x, y, z);
                if d[i] == 0 {
                    continue;
                }
                let mut best = d[i];
                best = best.min(if x + 1 < nx { d[i + 1] } else { border } + 1);
                best = best.min(if y + 1 < ny { d[i + nx] } else { border } + 1);
                best = best.min(if z + 1 < nz { d[i + nx * ny] } else { border } + 1);
                d[i] = best;
            }
        }
    }
    d.into_iter().map(|v| if v >= INF { u32::MAX } else { v }).collect()
}

/// 6-connected component labels (0 = not in region, components from 1) and
/// the size of each component.
pub fn components(region: &[bool], dims: [usize; 3]) -> (Vec<u32>, Vec<usize>) {
    let [nx, ny, nz] = dims;
    let mut labels = vec![0u32; region.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..region.len() {
        if !region[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            let mut visit = |j: usize| {
                if region[j] && labels[j] == 0 {
                    labels[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < nx {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - nx);
            }
            if y + 1 < ny {
                visit(i + nx);
            }
            if z > 0 {
                visit(i - nx * ny);
            }
            if z + 1 < nz {
                visit(i + nx * ny);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest 6-connected component.
pub fn largest_component(region: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let (labels, sizes) = components(region, dims);
    let Some((best, _)) = sizes.iter().enumerate().max_by_key(|&(i, &s)| (s, core::cmp::Reverse(i))) else {
        return vec![false; region.len()];
    };
    let keep = best as u32 + 1;
    labels.iter().map(|&l| l == keep).collect()
}

pub fn is_connected(region: &[bool], dims: [usize; 3]) -> bool {
    components(region, dims).1.len() == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_region(n: usize, lo: usize, hi: usize) -> Vec<bool> {
        let mut r = vec![false; n * n * n];
        for z in lo..hi {
            for y in lo..hi {
                for x in lo..hi {
                    r[x + n * (y + n * z)] = true;
                }
            }
        }
        r
    }

    /// Brute-force city-block distance to the nearest outside voxel.
    fn brute_inner(region: &[bool], n: usize, i: usize) -> u32 {
        let (x, y, z) = ((i % n) as i64, ((i / n) % n) as i64, (i / (n * n)) as i64);
        let mut best = i64::MAX;
        for zz in -1..=n as i64 {
            for yy in -1..=n as i64 {
                for xx in -1..=n as i64 {
                    let inside_grid = (0..n as i64).contains(&xx) && (0..n as i64).contains(&yy) && (0..n as i64).contains(&zz);
                    let out = !inside_grid || !region[(xx + n as i64 * (yy + n as i64 * zz)) as usize];
                    if out {
                        best = best.min((xx - x).abs() + (yy - y).abs() + (zz - z).abs());
                    }
                }
            }
        }
        best as u32
    }

    #[test]
    fn inner_distance_matches_brute_force() {
        let n = 7;
        let mut r = cube_region(n, 1, 6);
        r[3 + n * (3 + n * 1)] = false;
        r[0] = true;
        let d = inner_distance(&r, [n, n, n]);
        for i in 0..r.len() {
            let want = if r[i] { brute_inner(&r, n, i) } else { 0 };
            assert_eq!(d[i], want, "voxel {i}");
        }
    }

    #[test]
    fn erosion_of_cube_by_one() {
        let n = 12;
        let r = cube_region(n, 1, 11);
        let d = inner_distance(&r, [n, n, n]);
        assert_eq!(d.iter().filter(|&&v| v > 1).count(), 512);
        assert_eq!(*d.iter().max().unwrap(), 5);
    }

    #[test]
    fn outer_distance_and_components() {
        let n = 6;
        let mut r = vec![false; n * n * n];
        r[0] = true;
        r[5 + n * (5 + n * 5)] = true;
        let d = outer_distance(&r, [n, n, n]);
        assert_eq!(d[1], 1);
        assert_eq!(d[2 + n * 1], 3);
        let (_, sizes) = components(&r, [n, n, n]);
        assert_eq!(sizes, vec![1, 1]);
        assert!(!is_connected(&r, [n, n, n]));
        r[1] = true;
        let big = largest_component(&r, [n, n, n]);
        assert_eq!(big.iter().filter(|&&b| b).count(), 2);
        let empty = vec![false; 8];
        assert!(outer_distance(&empty, [2, 2, 2]).iter().all(|&v| v == u32::MAX));
    }
}
