//! Second pipeline step: jackknife collection of (shape feature, real Dice)
//! pairs, the linear quality regressor, and the direct-regression baseline.

mod direct;

pub use direct::{train_direct_regressor, DirectConfig, DirectRegressor};

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::dice::multiclass_dice;
use crate::nn::Real;
use crate::rng::{derive_seed, seeded};
use crate::synth::{OracleSegmenter, OracleSegmenterFactory};
use crate::vae::{Inference, ShapeFeature, VaeModel};
use crate::volume::VolumetricMask;
use crate::{Error, Result};

/// A case with its ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCase {
    pub case_id: String,
    pub label: VolumetricMask,
}

/// A trained preparation segmenter.
pub trait Segmenter {
    /// Ids of every case the segmenter saw during training.
    fn training_ids(&self) -> &BTreeSet<String>;
    /// Segments one case. Implementations read their own input for
    /// `case.case_id`; the ground truth must not influence a real model.
    fn predict(&self, case: &LabeledCase) -> Result<VolumetricMask>;
}

/// Trains preparation segmenters on a subset of cases.
pub trait SegmenterFactory {
    type Segmenter: Segmenter;
    fn train(&self, training_cases: &[&LabeledCase]) -> Result<Self::Segmenter>;
}

impl Segmenter for OracleSegmenter {
    fn training_ids(&self) -> &BTreeSet<String> {
        OracleSegmenter::training_ids(self)
    }

    fn predict(&self, case: &LabeledCase) -> Result<VolumetricMask> {
        Ok(self.segment(&case.case_id, &case.label)?.mask)
    }
}

impl SegmenterFactory for OracleSegmenterFactory {
    type Segmenter = OracleSegmenter;

    fn train(&self, training_cases: &[&LabeledCase]) -> Result<OracleSegmenter> {
        let ids: Vec<String> = training_cases.iter().map(|c| c.case_id.clone()).collect();
        OracleSegmenterFactory::train(self, &ids)
    }
}

/// Two disjoint folds covering the training ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JackknifePlan {
    pub fold1_ids: Vec<String>,
    pub fold2_ids: Vec<String>,
    pub seed: u64,
}

/// Seeded shuffle, then an even split; fold 1 takes the extra case.
pub fn make_jackknife_plan(case_ids: &[String], seed: u64) -> Result<JackknifePlan> {
    if case_ids.len() < 2 {
        return Err(Error::invalid("jackknife needs at least two cases"));
    }
    let unique: BTreeSet<&String> = case_ids.iter().collect();
    if unique.len() != case_ids.len() {
        return Err(Error::invalid("case ids must be unique"));
    }
    let mut ids = case_ids.to_vec();
    ids.sort();
    ids.shuffle(&mut seeded(derive_seed(seed, 0x1acc)));
    let fold2_ids = ids.split_off(ids.len().div_ceil(2));
    Ok(JackknifePlan { fold1_ids: ids, fold2_ids, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualitySample {
    pub case_id: String,
    pub feature: ShapeFeature,
    /// Mean Dice over foreground classes against the ground truth.
    pub real_dice: f64,
    pub per_class_real_dice: Vec<f64>,
    /// 1 or 2: the fold the case belongs to.
    pub source_fold: u8,
    /// The segmenter's prediction had no foreground.
    pub empty: bool,
}

/// A preparation-segmenter output for one case, scored against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifePrediction {
    pub case_id: String,
    pub source_fold: u8,
    pub prediction: VolumetricMask,
    pub real_dice: f64,
    pub per_class_real_dice: Vec<f64>,
}

/// Trains F₁ on fold 2 and F₂ on fold 1, then segments every fold-k case
/// with F_k. Results are in plan order (fold 1 first).
///
/// A segmenter whose training set contains a case it is asked to segment
/// is a hard [`Error::Leakage`].
pub fn jackknife_predictions<F: SegmenterFactory>(
    plan: &JackknifePlan,
    factory: &F,
    dataset: &[LabeledCase],
) -> Result<Vec<JackknifePrediction>> {
    let find = |id: &String| {
        dataset
            .iter()
            .find(|c| &c.case_id == id)
            .ok_or_else(|| Error::invalid(alloc::format!("case {id} missing from dataset")))
    };
    let fold1: Vec<&LabeledCase> = plan.fold1_ids.iter().map(find).collect::<Result<_>>()?;
    let fold2: Vec<&LabeledCase> = plan.fold2_ids.iter().map(find).collect::<Result<_>>()?;
    let f1 = factory.train(&fold2)?;
    let f2 = factory.train(&fold1)?;
    let mut out = Vec::with_capacity(fold1.len() + fold2.len());
    for (fold, cases, seg) in [(1u8, &fold1, &f1), (2, &fold2, &f2)] {
        for case in cases.iter() {
            if seg.training_ids().contains(&case.case_id) {
                return Err(Error::Leakage { case_id: case.case_id.clone() });
            }
            let prediction = seg.predict(case)?;
            let real = multiclass_dice(&case.label, &prediction, usize::from(case.label.num_classes()))?;
            out.push(JackknifePrediction {
                case_id: case.case_id.clone(),
                source_fold: fold,
                prediction,
                real_dice: real.mean,
                per_class_real_dice: real.per_class,
            });
        }
    }
    Ok(out)
}

/// Shape feature of each prediction; empty predictions get the sentinel.
pub fn score_predictions<T: Real>(vae: &VaeModel<T>, predictions: &[JackknifePrediction]) -> Result<Vec<QualitySample>> {
    predictions
        .iter()
        .map(|p| {
            let empty = !p.prediction.has_foreground();
            let feature = if empty {
                ShapeFeature::empty_sentinel(usize::from(p.prediction.num_classes()) - 1)
            } else {
                vae.shape_feature(&p.prediction, Inference::Deterministic)?
            };
            Ok(QualitySample {
                case_id: p.case_id.clone(),
                feature,
                real_dice: p.real_dice,
                per_class_real_dice: p.per_class_real_dice.clone(),
                source_fold: p.source_fold,
                empty,
            })
        })
        .collect()
}

/// [`jackknife_predictions`] followed by [`score_predictions`].
pub fn collect_samples<F: SegmenterFactory, T: Real>(
    plan: &JackknifePlan,
    factory: &F,
    vae: &VaeModel<T>,
    dataset: &[LabeledCase],
) -> Result<Vec<QualitySample>> {
    score_predictions(vae, &jackknife_predictions(plan, factory, dataset)?)
}

/// Which scalar of the shape feature drives the regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    #[default]
    FakeDiceOnly,
    /// `fake_dice − λ·kl_term`.
    SValue,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::FakeDiceOnly => "fake_dice_only",
            FeatureMode::SValue => "s_value",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [FeatureMode::FakeDiceOnly, FeatureMode::SValue].into_iter().find(|m| m.name() == s)
    }
}

/// `quality = a·x + b` on the selected feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorParams {
    pub a: f64,
    pub b: f64,
    pub feature_mode: FeatureMode,
    /// Foreground class (0-based) the regressor scores; `None` uses the class mean.
    pub class_index: Option<usize>,
}

impl RegressorParams {
    /// Regressor input for `feature`.
    pub fn select(&self, feature: &ShapeFeature) -> f64 {
        match (self.feature_mode, self.class_index) {
            (FeatureMode::FakeDiceOnly, None) => feature.fake_dice,
            (FeatureMode::SValue, None) => feature.s_value,
            (FeatureMode::FakeDiceOnly, Some(c)) => feature.per_class_fake_dice.get(c).copied().unwrap_or(0.0),
            // the KL term is shared by all classes
            (FeatureMode::SValue, Some(c)) => {
                let fd = feature.per_class_fake_dice.get(c).copied().unwrap_or(0.0);
                fd - (feature.fake_dice - feature.s_value)
            }
        }
    }

    fn target(&self, sample: &QualitySample) -> f64 {
        match self.class_index {
            None => sample.real_dice,
            Some(c) => sample.per_class_real_dice.get(c).copied().unwrap_or(0.0),
        }
    }
}

/// Ordinary least squares of real Dice on the selected feature.
pub fn fit_linear(samples: &[QualitySample], feature_mode: FeatureMode) -> Result<RegressorParams> {
    fit_linear_for(samples, feature_mode, None)
}

/// [`fit_linear`] restricted to one foreground class.
pub fn fit_linear_for(samples: &[QualitySample], feature_mode: FeatureMode, class_index: Option<usize>) -> Result<RegressorParams> {
    let proto = RegressorParams { a: 0.0, b: 0.0, feature_mode, class_index };
    let xy: Vec<(f64, f64)> = samples.iter().map(|s| (proto.select(&s.feature), proto.target(s))).collect();
    let (a, b) = least_squares(&xy)?;
    Ok(RegressorParams { a, b, ..proto })
}

/// Closed-form simple linear regression `y ≈ a·x + b`.
pub fn least_squares(xy: &[(f64, f64)]) -> Result<(f64, f64)> {
    if xy.len() < 2 {
        return Err(Error::invalid("fit needs at least two samples"));
    }
    if xy.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * f64::EPSILON * n * (1.0 + mx * mx) {
        return Err(Error::DegenerateFit);
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

/// `a·x + b` clamped to `[0, 1]`; the empty-prediction sentinel scores 0.
pub fn predict_quality(params: &RegressorParams, feature: &ShapeFeature) -> f64 {
    if feature.empty {
        return 0.0;
    }
    (params.a * params.select(feature) + params.b).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn sample(x: f64, y: f64) -> QualitySample {
        QualitySample {
            case_id: String::new(),
            feature: ShapeFeature::from_parts(alloc::vec![x], 0.0, 0.0),
            real_dice: y,
            per_class_real_dice: alloc::vec![y],
            source_fold: 1,
            empty: false,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn plan_shapes() {
        let p = make_jackknife_plan(&ids(4), 1).unwrap();
        assert_eq!((p.fold1_ids.len(), p.fold2_ids.len()), (2, 2));
        let p = make_jackknife_plan(&ids(5), 1).unwrap();
        assert_eq!((p.fold1_ids.len(), p.fold2_ids.len()), (3, 2));
        assert_eq!(p, make_jackknife_plan(&ids(5), 1).unwrap());
        assert!(make_jackknife_plan(&ids(1), 1).is_err());
        assert!(make_jackknife_plan(&["a".to_string(), "a".to_string()], 1).is_err());
    }

    #[test]
    fn fit_examples() {
        let p = fit_linear(&[sample(0.0, 0.0), sample(1.0, 1.0)], FeatureMode::FakeDiceOnly).unwrap();
        assert!((p.a - 1.0).abs() < 1e-12 && p.b.abs() < 1e-12);
        let line: Vec<_> = (0..5).map(|i| sample(i as f64 * 0.2, 2.0 * i as f64 * 0.2 + 0.1)).collect();
        let p = fit_linear(&line, FeatureMode::FakeDiceOnly).unwrap();
        assert!((p.a - 2.0).abs() < 1e-9 && (p.b - 0.1).abs() < 1e-9);
        let e = fit_linear(&[sample(0.5, 0.2), sample(0.5, 0.8)], FeatureMode::FakeDiceOnly).unwrap_err();
        assert_eq!(e, Error::DegenerateFit);
    }

    #[test]
    fn predict_examples() {
        let p = RegressorParams { a: 1.0, b: 0.0, feature_mode: FeatureMode::FakeDiceOnly, class_index: None };
        assert_eq!(predict_quality(&p, &ShapeFeature::from_parts(alloc::vec![0.8], 0.0, 0.0)), 0.8);
        let p = RegressorParams { b: 0.5, ..p };
        assert_eq!(predict_quality(&p, &ShapeFeature::from_parts(alloc::vec![0.9], 0.0, 0.0)), 1.0);
        assert_eq!(predict_quality(&p, &ShapeFeature::empty_sentinel(1)), 0.0);
    }

    #[test]
    fn s_value_mode_uses_combined_feature() {
        let f = ShapeFeature::from_parts(alloc::vec![0.9, 0.5], 4.0, 0.25);
        let p = RegressorParams { a: 1.0, b: 0.0, feature_mode: FeatureMode::SValue, class_index: None };
        assert!((p.select(&f) - (0.7 - 1.0)).abs() < 1e-12);
        let p = RegressorParams { class_index: Some(0), ..p };
        assert!((p.select(&f) - (0.9 - 1.0)).abs() < 1e-12);
    }
}
