//! The VMSK mask file format.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `VMSK` |
//! | 1 | version `0x01` |
//! | 12 | `u32` nx, ny, nz |
//! | 12 | `f32` sx, sy, sz (mm) |
//! | 2 | `u16` num_classes |
//! | nx·ny·nz | `u8` labels, x fastest |

use std::fs;
use std::path::Path;

use shapeqa_core::VolumetricMask;

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"VMSK";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 12 + 12 + 2;

pub fn encode(mask: &VolumetricMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for d in mask.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in mask.spacing() {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out.extend_from_slice(&mask.num_classes().to_le_bytes());
    out.extend_from_slice(mask.labels());
    out
}

/// Parses a VMSK byte stream; `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<VolumetricMask> {
    let bad = |m: &str| Error::format(origin, m);
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated VMSK header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic, expected VMSK"));
    }
    if bytes[4] != VERSION {
        return Err(bad(&format!("unsupported VMSK version {}", bytes[4])));
    }
    let word = |i: usize| [bytes[5 + 4 * i], bytes[6 + 4 * i], bytes[7 + 4 * i], bytes[8 + 4 * i]];
    let dims = [0, 1, 2].map(|i| u32::from_le_bytes(word(i)) as usize);
    let spacing = [3, 4, 5].map(|i| f64::from(f32::from_le_bytes(word(i))));
    let num_classes = u16::from_le_bytes([bytes[29], bytes[30]]);
    let voxels = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| bad("dimensions overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != voxels {
        return Err(bad(&format!("expected {voxels} label bytes, found {}", body.len())));
    }
    if let Some(&l) = body.iter().find(|&&l| u16::from(l) >= num_classes) {
        return Err(bad(&format!("label {l} is not below num_classes {num_classes}")));
    }
    VolumetricMask::new(dims, spacing, num_classes, body.to_vec()).map_err(|e| bad(&e.to_string()))
}

pub fn write(path: &Path, mask: &VolumetricMask) -> Result<()> {
    fs::write(path, encode(mask)).map_err(Error::io(path))
}

pub fn read(path: &Path) -> Result<VolumetricMask> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, path)
}
