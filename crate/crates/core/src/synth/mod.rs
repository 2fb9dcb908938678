//! Synthetic ground truth for desk-scale experiments: parametric 3D shapes,
//! corruption operators with exactly known Dice, and a corruption-oracle
//! segmenter.

mod corrupt;
pub mod morphology;
mod oracle;
mod shapes;

pub use corrupt::{corrupt, Corruption, CorruptionOperator, CorruptionSpec};
pub use oracle::{CorruptionDistribution, OperatorMix, OracleSegmenter, OracleSegmenterFactory};
pub use shapes::{foreground_connected, generate_shapes, sphere, InclusionSpec, ShapeFamily, ShapeSpec};

use rand::Rng;

fn shapes_direction(rng: &mut crate::rng::SeededRng) -> [f64; 3] {
    let u: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * core::f64::consts::PI);
    let s = libm::sqrt(1.0 - u * u);
    [s * libm::cos(phi), s * libm::sin(phi), u]
}
