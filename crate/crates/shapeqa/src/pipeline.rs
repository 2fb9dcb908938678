//! Pipeline stages shared by the CLI and the integration tests.
//!
//! Every randomized step draws its seed from the single run seed through a
//! named stream, so stages can be rerun independently and reproduce exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use shapeqa_core::dice::multiclass_dice;
use shapeqa_core::metrics;
use shapeqa_core::preprocess::{crop_to_centroid_cube, resample_isotropic};
use shapeqa_core::regress::{
    collect_samples, jackknife_predictions, make_jackknife_plan, score_predictions, train_direct_regressor,
    DirectRegressor, JackknifePrediction, LabeledCase, QualitySample,
};
use shapeqa_core::rng::{derive_seed_for_label, seeded};
use shapeqa_core::synth::{generate_shapes, CorruptionOperator, OracleSegmenterFactory, ShapeSpec};
use shapeqa_core::vae::{train_vae_with, Inference, ShapeFeature, TrainingLog, TrainingRecord, VaeConfig, VaeModel};
use shapeqa_core::VolumetricMask;

use crate::checkpoint::sha256_hex;
use crate::config::PipelineConfig;
use crate::report::AssessedCase;
use crate::{vmsk, Error, Result};

/// Seed of a named pipeline stream.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    derive_seed_for_label(seed, stream)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// The final segmenter's output on a validation case.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPrediction {
    pub mask: VolumetricMask,
    pub operator: CorruptionOperator,
    pub severity: f64,
    pub real_dice: f64,
    pub per_class_real_dice: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub case_id: String,
    pub split: Split,
    pub family: String,
    pub label: VolumetricMask,
    /// Present for validation cases only.
    pub prediction: Option<BenchPrediction>,
}

/// Ground-truth shapes split into training and validation cases, with
/// oracle predictions for the validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct Bench {
    pub cases: Vec<BenchCase>,
}

pub fn oracle_factory(cfg: &PipelineConfig, seed: u64) -> OracleSegmenterFactory {
    let mut f = OracleSegmenterFactory::new(cfg.corruption.clone(), stream_seed(seed, "oracle"));
    f.training_severity_scale = cfg.training_severity_scale;
    f
}

impl Bench {
    /// Generates shapes, splits them by seeded shuffle and segments the
    /// validation cases with an oracle trained on every training case.
    pub fn generate(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let total = cfg.train_cases + cfg.validation_cases;
        let spec = ShapeSpec { seed: stream_seed(seed, "shapes"), ..cfg.shapes.clone() };
        let shapes = generate_shapes(&spec, total)?;
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut seeded(stream_seed(seed, "split")));
        let mut cases: Vec<BenchCase> = shapes
            .into_iter()
            .enumerate()
            .map(|(i, label)| BenchCase {
                case_id: format!("case_{i:04}"),
                split: Split::Train,
                family: spec.family.name().into(),
                label,
                prediction: None,
            })
            .collect();
        for &i in &order[cfg.train_cases..] {
            cases[i].split = Split::Validation;
        }
        let train_ids: Vec<String> =
            cases.iter().filter(|c| c.split == Split::Train).map(|c| c.case_id.clone()).collect();
        let segmenter = oracle_factory(cfg, seed).train(&train_ids)?;
        for case in cases.iter_mut().filter(|c| c.split == Split::Validation) {
            let spec = segmenter.corruption_for(&case.case_id);
            let out = segmenter.segment(&case.case_id, &case.label)?;
            case.prediction = Some(BenchPrediction {
                mask: out.mask,
                operator: spec.operator,
                severity: spec.severity,
                real_dice: out.real_dice,
                per_class_real_dice: out.per_class_dice,
            });
        }
        Ok(Self { cases })
    }

    pub fn train(&self) -> impl Iterator<Item = &BenchCase> {
        self.cases.iter().filter(|c| c.split == Split::Train)
    }

    pub fn validation(&self) -> impl Iterator<Item = &BenchCase> {
        self.cases.iter().filter(|c| c.split == Split::Validation)
    }

    pub fn labeled_train(&self) -> Vec<LabeledCase> {
        self.train().map(|c| LabeledCase { case_id: c.case_id.clone(), label: c.label.clone() }).collect()
    }

    fn manifest(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e| Error::Csv { path: "manifest.csv".into(), source: e };
        w.write_record(MANIFEST_HEADER).map_err(err)?;
        for c in &self.cases {
            let p = c.prediction.as_ref();
            w.write_record([
                c.case_id.clone(),
                c.split.name().into(),
                c.family.clone(),
                p.map_or(String::new(), |p| p.operator.name().into()),
                p.map_or(String::new(), |p| p.severity.to_string()),
                p.map_or(String::new(), |p| p.real_dice.to_string()),
                p.map_or(String::new(), |p| join_f64(&p.per_class_real_dice)),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes `manifest.csv`, `labels/*.vmsk` and `predictions/*.vmsk`;
    /// returns the manifest hash.
    pub fn write(&self, dir: &Path) -> Result<String> {
        for sub in ["labels", "predictions"] {
            fs::create_dir_all(dir.join(sub)).map_err(Error::io(dir.join(sub)))?;
        }
        for c in &self.cases {
            vmsk::write(&dir.join("labels").join(format!("{}.vmsk", c.case_id)), &c.label)?;
            if let Some(p) = &c.prediction {
                vmsk::write(&dir.join("predictions").join(format!("{}.vmsk", c.case_id)), &p.mask)?;
            }
        }
        let manifest = self.manifest()?;
        let path = dir.join("manifest.csv");
        fs::write(&path, &manifest).map_err(Error::io(&path))?;
        Ok(sha256_hex(&manifest))
    }

    /// Reads a bench directory; returns it with the manifest hash.
    pub fn read(dir: &Path) -> Result<(Self, String)> {
        let path = dir.join("manifest.csv");
        let bytes = fs::read(&path).map_err(Error::io(&path))?;
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let header = r.headers().map_err(Error::csv(&path))?.clone();
        if header.iter().ne(MANIFEST_HEADER) {
            return Err(Error::format(&path, "unexpected manifest header"));
        }
        let mut cases = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(Error::csv(&path))?;
            let f = |i: usize| rec.get(i).unwrap_or_default().to_string();
            let bad = || Error::format(&path, format!("malformed row for {}", f(0)));
            let split = match f(1).as_str() {
                "train" => Split::Train,
                "validation" => Split::Validation,
                _ => return Err(bad()),
            };
            let label = vmsk::read(&dir.join("labels").join(format!("{}.vmsk", f(0))))?;
            let prediction = match split {
                Split::Train => None,
                Split::Validation => Some(BenchPrediction {
                    mask: vmsk::read(&dir.join("predictions").join(format!("{}.vmsk", f(0))))?,
                    operator: CorruptionOperator::parse(&f(3)).ok_or_else(bad)?,
                    severity: f(4).parse().map_err(|_| bad())?,
                    real_dice: f(5).parse().map_err(|_| bad())?,
                    per_class_real_dice: f(6).split(';').map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?,
                }),
            };
            cases.push(BenchCase { case_id: f(0), split, family: f(2), label, prediction });
        }
        Ok((Self { cases }, sha256_hex(&bytes)))
    }
}

const MANIFEST_HEADER: [&str; 7] =
    ["case_id", "split", "family", "operator", "severity", "real_dice", "per_class_real_dice"];

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Resamples to the configured spacing; the VAE then crops internally.
pub fn to_isotropic(mask: &VolumetricMask, cfg: &PipelineConfig) -> Result<VolumetricMask> {
    Ok(resample_isotropic(mask, cfg.preprocess.target_spacing_mm)?)
}

/// VAE configuration with the run's seed stream applied.
pub fn vae_config(cfg: &PipelineConfig, seed: u64) -> VaeConfig {
    VaeConfig { seed: stream_seed(seed, "vae"), ..cfg.vae.clone() }
}

/// Trains the shape prior on the training labels.
pub fn train_vae_stage(
    bench: &Bench,
    cfg: &PipelineConfig,
    seed: u64,
    on_step: impl FnMut(&TrainingRecord),
) -> Result<(VaeModel<f32>, TrainingLog)> {
    let cube = cfg.preprocess.cube_size;
    let masks: Vec<VolumetricMask> = bench
        .train()
        .map(|c| Ok(crop_to_centroid_cube(&to_isotropic(&c.label, cfg)?, cube)?))
        .collect::<Result<_>>()?;
    Ok(train_vae_with(&masks, &vae_config(cfg, seed), &cfg.preprocess, on_step)?)
}

/// Jackknife predictions on the training split and their quality samples.
pub fn collect_stage(
    bench: &Bench,
    cfg: &PipelineConfig,
    seed: u64,
    vae: &VaeModel<f32>,
) -> Result<(Vec<JackknifePrediction>, Vec<QualitySample>)> {
    let dataset: Vec<LabeledCase> = bench
        .labeled_train()
        .into_iter()
        .map(|c| Ok(LabeledCase { label: to_isotropic(&c.label, cfg)?, ..c }))
        .collect::<Result<_>>()?;
    let ids: Vec<String> = dataset.iter().map(|c| c.case_id.clone()).collect();
    let plan = make_jackknife_plan(&ids, stream_seed(seed, "jackknife"))?;
    let factory = oracle_factory(cfg, seed);
    let predictions = jackknife_predictions(&plan, &factory, &dataset)?;
    let samples = score_predictions(vae, &predictions)?;
    debug_assert_eq!(samples, collect_samples(&plan, &factory, vae, &dataset)?);
    Ok((predictions, samples))
}

/// Shape feature of one predicted mask; empty masks map to the sentinel.
pub fn feature_of(vae: &VaeModel<f32>, mask: &VolumetricMask, cfg: &PipelineConfig) -> Result<ShapeFeature> {
    let iso = to_isotropic(mask, cfg)?;
    if !iso.has_foreground() {
        return Ok(ShapeFeature::empty_sentinel(vae.config().foreground_channels()));
    }
    Ok(vae.shape_feature(&iso, Inference::Deterministic)?)
}

/// Assessed validation predictions with their oracle real Dice.
pub fn assess_validation(bench: &Bench, vae: &VaeModel<f32>, cfg: &PipelineConfig) -> Result<Vec<AssessedCase>> {
    bench
        .validation()
        .map(|c| {
            let p = c.prediction.as_ref().expect("validation cases carry predictions");
            Ok(AssessedCase {
                case_id: c.case_id.clone(),
                feature: feature_of(vae, &p.mask, cfg)?,
                real_dice: Some(p.real_dice),
            })
        })
        .collect()
}

/// Trains the direct-regression baseline on the jackknife predictions, the
/// same data the linear regressor is fitted on.
pub fn direct_stage(cfg: &PipelineConfig, seed: u64, predictions: &[JackknifePrediction]) -> Result<DirectRegressor<f32>> {
    let data: Vec<(VolumetricMask, f64)> = predictions
        .iter()
        .map(|p| Ok((to_isotropic(&p.prediction, cfg)?, p.real_dice)))
        .collect::<Result<_>>()?;
    let config = shapeqa_core::regress::DirectConfig { seed: stream_seed(seed, "direct"), ..cfg.direct.clone() };
    Ok(train_direct_regressor(&data, &config)?)
}

/// `(predicted, real)` Dice of the baseline on the validation split.
pub fn direct_validation(bench: &Bench, model: &DirectRegressor<f32>, cfg: &PipelineConfig) -> Result<Vec<(f64, f64)>> {
    bench
        .validation()
        .map(|c| {
            let p = c.prediction.as_ref().expect("validation cases carry predictions");
            Ok((model.predict(&to_isotropic(&p.mask, cfg)?)?, p.real_dice))
        })
        .collect()
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub mae: f64,
    pub std_residual: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

impl ComparisonRow {
    pub fn from_pairs(method: &str, pairs: &[(f64, f64)]) -> Result<Self> {
        let (pred, real): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        Ok(Self {
            method: method.into(),
            mae: metrics::mae(&pred, &real)?,
            std_residual: metrics::std_residual(&pred, &real)?,
            pearson: metrics::pearson(&pred, &real).ok(),
            spearman: metrics::spearman(&pred, &real).ok(),
        })
    }
}

/// Fixed-width table with columns Method, MAE, STD, P.C., S.C.
pub fn format_table(rows: &[ComparisonRow]) -> String {
    let cell = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    let mut s = format!("{:<20} {:>7} {:>7} {:>7} {:>7}\n", "Method", "MAE", "STD", "P.C.", "S.C.");
    for r in rows {
        s += &format!(
            "{:<20} {:>7} {:>7} {:>7} {:>7}\n",
            r.method,
            cell(Some(r.mae)),
            cell(Some(r.std_residual)),
            cell(r.pearson),
            cell(r.spearman)
        );
    }
    s
}

/// Per-class real Dice of `prediction` against `label`.
pub fn per_class_dice(label: &VolumetricMask, prediction: &VolumetricMask) -> Result<Vec<f64>> {
    Ok(multiclass_dice(label, prediction, usize::from(label.num_classes()))?.per_class)
}

/// Standard artifact locations inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn bench(&self) -> PathBuf {
        self.root.join("bench")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("vae.ckpt")
    }
    pub fn training_curve(&self) -> PathBuf {
        self.root.join("training_curve.csv")
    }
    pub fn samples(&self) -> PathBuf {
        self.root.join("samples.csv")
    }
    pub fn regressor(&self) -> PathBuf {
        self.root.join("regressor.txt")
    }
    pub fn direct_rows(&self) -> PathBuf {
        self.root.join("direct_regression.json")
    }
}
