//! Assessment reports: JSON, per-case CSV and scatter CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shapeqa_core::metrics;
use shapeqa_core::regress::{predict_quality, RegressorParams};
use shapeqa_core::vae::ShapeFeature;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    pub predicted_dice: f64,
    pub fake_dice: f64,
    pub kl_term: f64,
    pub real_dice: Option<f64>,
    /// Predicted quality below the alarm threshold, when one was given.
    pub alarm: Option<bool>,
    /// The assessed mask had no foreground.
    pub empty: bool,
}

/// Percent-scale agreement statistics. Correlations are `None` when one
/// side is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cases: usize,
    pub mae: f64,
    pub std_residual: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub vae_checkpoint_hash: String,
    pub regressor_hash: String,
    pub bench_manifest_hash: Option<String>,
    pub seed: u64,
    pub feature_mode: String,
    pub alarm_threshold: Option<f64>,
    /// How STD and Spearman ties are defined.
    pub std_definition: String,
    pub rank_ties: String,
}

impl Metadata {
    pub fn new(vae_checkpoint_hash: String, regressor_hash: String, seed: u64, params: &RegressorParams) -> Self {
        Self {
            vae_checkpoint_hash,
            regressor_hash,
            bench_manifest_hash: None,
            seed,
            feature_mode: params.feature_mode.name().into(),
            alarm_threshold: None,
            std_definition: "population standard deviation of predicted minus real".into(),
            rank_ties: "average".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub per_case: Vec<CaseRow>,
    /// Present only when at least two cases carry a real Dice.
    pub aggregate: Option<Aggregate>,
    pub metadata: Metadata,
}

/// One assessed case: its shape feature and, when known, its real Dice.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessedCase {
    pub case_id: String,
    pub feature: ShapeFeature,
    pub real_dice: Option<f64>,
}

pub fn build_report(cases: &[AssessedCase], params: &RegressorParams, metadata: Metadata) -> AssessmentReport {
    let per_case: Vec<CaseRow> = cases
        .iter()
        .map(|c| {
            let predicted = predict_quality(params, &c.feature);
            CaseRow {
                case_id: c.case_id.clone(),
                predicted_dice: predicted,
                fake_dice: c.feature.fake_dice,
                kl_term: c.feature.kl_term,
                real_dice: c.real_dice,
                alarm: metadata.alarm_threshold.map(|t| predicted < t),
                empty: c.feature.empty,
            }
        })
        .collect();
    let aggregate = aggregate(&per_case);
    AssessmentReport { per_case, aggregate, metadata }
}

fn aggregate(rows: &[CaseRow]) -> Option<Aggregate> {
    let (pred, real): (Vec<f64>, Vec<f64>) =
        rows.iter().filter_map(|r| r.real_dice.map(|d| (r.predicted_dice, d))).unzip();
    if real.len() < 2 {
        return None;
    }
    Some(Aggregate {
        cases: real.len(),
        mae: metrics::mae(&pred, &real).ok()?,
        std_residual: metrics::std_residual(&pred, &real).ok()?,
        pearson: metrics::pearson(&pred, &real).ok(),
        spearman: metrics::spearman(&pred, &real).ok(),
    })
}

impl AssessmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(Error::io(path))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_json(&text).map_err(|source| Error::Json { path: path.into(), source })
    }

    pub fn write_case_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
        w.write_record(["case_id", "predicted_dice", "fake_dice", "kl_term", "real_dice", "alarm", "empty"])
            .map_err(Error::csv(path))?;
        for r in &self.per_case {
            let opt = |v: Option<String>| v.unwrap_or_default();
            w.write_record([
                r.case_id.clone(),
                r.predicted_dice.to_string(),
                r.fake_dice.to_string(),
                r.kl_term.to_string(),
                opt(r.real_dice.map(|v| v.to_string())),
                opt(r.alarm.map(|v| v.to_string())),
                r.empty.to_string(),
            ])
            .map_err(Error::csv(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    /// `(predicted_dice, real_dice)` pairs for cases with ground truth.
    pub fn write_scatter_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
        w.write_record(["predicted_dice", "real_dice"]).map_err(Error::csv(path))?;
        for r in &self.per_case {
            if let Some(real) = r.real_dice {
                w.write_record([r.predicted_dice.to_string(), real.to_string()]).map_err(Error::csv(path))?;
            }
        }
        w.flush().map_err(Error::io(path))
    }
}
