use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::corrupt::{corrupt, Corruption, CorruptionOperator, CorruptionSpec};
use crate::rng::{derive_seed, derive_seed_for_label, seeded};
use crate::volume::VolumetricMask;
use crate::{Error, Result};

/// One component of a [`CorruptionDistribution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorMix {
    pub operator: CorruptionOperator,
    pub weight: f64,
    /// Severity is drawn uniformly from this closed range.
    pub severity_range: (f64, f64),
}

/// Weighted mixture of corruption operators, each with its own severity range.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionDistribution {
    pub components: Vec<OperatorMix>,
}

impl Default for CorruptionDistribution {
    /// Failure modes that leave a visibly implausible shape: cavities, ragged
    /// boundaries and, at lower weight, a cut-off part. Real Dice spans about
    /// [0.19, 0.98] on the default shape population.
    ///
    /// Erosion, dilation and false blobs are listed with weight 0. Their
    /// outputs still look like plausible organs after centroid cropping, so a
    /// shape prior ranks them poorly against the other operators.
    fn default() -> Self {
        let mix = |operator, weight, severity_range| OperatorMix { operator, weight, severity_range };
        Self {
            components: alloc::vec![
                mix(CorruptionOperator::Erode, 0.0, (0.05, 0.45)),
                mix(CorruptionOperator::Dilate, 0.0, (0.05, 0.6)),
                mix(CorruptionOperator::PunchHoles, 1.0, (0.05, 0.95)),
                mix(CorruptionOperator::AddFalseBlob, 0.0, (0.05, 1.0)),
                mix(CorruptionOperator::BoundaryJitter, 1.0, (0.1, 1.0)),
                mix(CorruptionOperator::DropComponent, 0.5, (0.05, 0.5)),
            ],
        }
    }
}

impl CorruptionDistribution {
    pub fn single(operator: CorruptionOperator, severity_range: (f64, f64)) -> Self {
        Self { components: alloc::vec![OperatorMix { operator, weight: 1.0, severity_range }] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("corruption distribution has no operators"));
        }
        for c in &self.components {
            let (lo, hi) = c.severity_range;
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::invalid("severity ranges must satisfy 0 <= lo <= hi <= 1"));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::invalid("operator weights must be finite and non-negative"));
            }
        }
        if self.components.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
            return Err(Error::invalid("operator weights sum to zero"));
        }
        Ok(())
    }

    /// Draws a corruption for `seed`; assumes `validate` passed.
    pub fn sample(&self, seed: u64) -> CorruptionSpec {
        let mut rng = seeded(seed);
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        let mut pick = rng.random_range(0.0..total);
        let mut chosen = *self.components.iter().rev().find(|c| c.weight > 0.0).expect("validated");
        for c in &self.components {
            if pick < c.weight {
                chosen = *c;
                break;
            }
            pick -= c.weight;
        }
        let (lo, hi) = chosen.severity_range;
        let severity = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        CorruptionSpec { operator: chosen.operator, severity, seed: rng.random() }
    }
}

/// Builds oracle segmenters that "predict" by corrupting the ground truth.
///
/// Each trained segmenter derives its corruptions from the factory seed, the
/// sorted training ids and the case id, so different folds disagree on the
/// same case while reruns reproduce every prediction exactly. Cases the
/// segmenter was trained on get `training_severity_scale` times the drawn
/// severity, mimicking overfitting.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSegmenterFactory {
    pub distribution: CorruptionDistribution,
    pub training_severity_scale: f64,
    pub seed: u64,
}

impl OracleSegmenterFactory {
    pub fn new(distribution: CorruptionDistribution, seed: u64) -> Self {
        Self { distribution, training_severity_scale: 0.25, seed }
    }

    pub fn train(&self, training_ids: &[String]) -> Result<OracleSegmenter> {
        self.distribution.validate()?;
        if !(0.0..=1.0).contains(&self.training_severity_scale) {
            return Err(Error::invalid("training_severity_scale must lie in [0, 1]"));
        }
        let ids: BTreeSet<String> = training_ids.iter().cloned().collect();
        let mut fold_seed = self.seed;
        for id in &ids {
            fold_seed = derive_seed_for_label(fold_seed, id);
        }
        Ok(OracleSegmenter {
            distribution: self.distribution.clone(),
            training_severity_scale: self.training_severity_scale,
            training_ids: ids,
            fold_seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSegmenter {
    distribution: CorruptionDistribution,
    training_severity_scale: f64,
    training_ids: BTreeSet<String>,
    fold_seed: u64,
}

impl OracleSegmenter {
    pub fn training_ids(&self) -> &BTreeSet<String> {
        &self.training_ids
    }

    /// The corruption applied to `case_id`.
    pub fn corruption_for(&self, case_id: &str) -> CorruptionSpec {
        let mut spec = self.distribution.sample(derive_seed(derive_seed_for_label(self.fold_seed, case_id), 0));
        if self.training_ids.contains(case_id) {
            spec.severity *= self.training_severity_scale;
        }
        spec
    }

    /// Prediction together with its exact Dice against `ground_truth`.
    pub fn segment(&self, case_id: &str, ground_truth: &VolumetricMask) -> Result<Corruption> {
        corrupt(ground_truth, &self.corruption_for(case_id))
    }
}
