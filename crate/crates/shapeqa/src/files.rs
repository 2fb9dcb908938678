//! CSV and key-value artifacts exchanged between pipeline stages.

use std::fs;
use std::path::Path;

use shapeqa_core::regress::{FeatureMode, QualitySample, RegressorParams};
use shapeqa_core::vae::{ShapeFeature, TrainingLog};

use crate::checkpoint::sha256_hex;
use crate::config::{num, parse_pairs};
use crate::{Error, Result};

pub fn write_training_curve(path: &Path, log: &TrainingLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["iteration", "loss", "fake_dice", "kl_term"]).map_err(Error::csv(path))?;
    for r in &log.records {
        w.write_record([r.iteration.to_string(), r.loss.to_string(), r.fake_dice.to_string(), r.kl_term.to_string()])
            .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

const SAMPLE_HEADER: [&str; 6] = ["case_id", "source_fold", "fake_dice", "kl_term", "real_dice", "empty"];

pub fn write_samples(path: &Path, samples: &[QualitySample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(SAMPLE_HEADER).map_err(Error::csv(path))?;
    for s in samples {
        w.write_record([
            s.case_id.clone(),
            s.source_fold.to_string(),
            s.feature.fake_dice.to_string(),
            s.feature.kl_term.to_string(),
            s.real_dice.to_string(),
            s.empty.to_string(),
        ])
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Reads samples back; `lambda_kl` rebuilds the combined feature.
pub fn read_samples(path: &Path, lambda_kl: f64) -> Result<Vec<QualitySample>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let header = r.headers().map_err(Error::csv(path))?.clone();
    if header.iter().ne(SAMPLE_HEADER) {
        return Err(Error::format(path, "unexpected samples header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(Error::csv(path))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |_| Error::format(path, format!("malformed row {:?}", rec.position().map(|p| p.line())));
        let empty: bool = field(5).parse().map_err(|_| bad(()))?;
        let real: f64 = field(4).parse().map_err(|_| bad(()))?;
        let feature = if empty {
            ShapeFeature::empty_sentinel(1)
        } else {
            let fd: f64 = field(2).parse().map_err(|_| bad(()))?;
            ShapeFeature::from_parts(vec![fd], field(3).parse().map_err(|_| bad(()))?, lambda_kl)
        };
        out.push(QualitySample {
            case_id: field(0).to_string(),
            feature,
            real_dice: real,
            per_class_real_dice: vec![real],
            source_fold: field(1).parse().map_err(|_| bad(()))?,
            empty,
        });
    }
    Ok(out)
}

/// Fitted regressor plus the checkpoint it was fitted against.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorFile {
    pub params: RegressorParams,
    pub vae_checkpoint_hash: String,
}

impl RegressorFile {
    pub fn render(&self) -> String {
        format!(
            "a = {}\nb = {}\nfeature_mode = {}\nvae_checkpoint_hash = {}\n",
            self.params.a,
            self.params.b,
            self.params.feature_mode.name(),
            self.vae_checkpoint_hash
        )
    }

    /// Writes the file and returns its SHA-256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.render();
        fs::write(path, &text).map_err(Error::io(path))?;
        Ok(sha256_hex(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let (mut a, mut b, mut mode, mut hash) = (None, None, None, None);
        for (k, v) in parse_pairs(&text)? {
            match k.as_str() {
                "a" => a = Some(num::<f64>(&k, &v)?),
                "b" => b = Some(num::<f64>(&k, &v)?),
                "feature_mode" => mode = FeatureMode::parse(&v),
                "vae_checkpoint_hash" => hash = Some(v),
                _ => return Err(Error::format(path, format!("unknown key {k}"))),
            }
        }
        let (Some(a), Some(b), Some(feature_mode), Some(vae_checkpoint_hash)) = (a, b, mode, hash) else {
            return Err(Error::format(path, "regressor file needs a, b, feature_mode and vae_checkpoint_hash"));
        };
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::format(path, "regressor coefficients must be finite"));
        }
        let params = RegressorParams { a, b, feature_mode, class_index: None };
        Ok((Self { params, vae_checkpoint_hash }, sha256_hex(text.as_bytes())))
    }
}
