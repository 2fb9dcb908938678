//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated and ranges are written `lo..hi`. Unknown keys are an
//! error so typos never silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use shapeqa_core::preprocess::PreprocessConfig;
use shapeqa_core::regress::{DirectConfig, FeatureMode};
use shapeqa_core::synth::{CorruptionDistribution, CorruptionOperator, InclusionSpec, OperatorMix, ShapeFamily, ShapeSpec};
use shapeqa_core::vae::VaeConfig;

use crate::{Error, Result};

/// Everything a pipeline run needs besides the global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    /// `input_cube` always mirrors `preprocess.cube_size`.
    pub vae: VaeConfig,
    pub shapes: ShapeSpec,
    pub train_cases: usize,
    pub validation_cases: usize,
    pub corruption: CorruptionDistribution,
    pub training_severity_scale: f64,
    pub feature_mode: FeatureMode,
    pub direct: DirectConfig,
}

impl PipelineConfig {
    /// Desk-scale defaults: 32³ cubes, latent 16, 5000 iterations.
    pub fn desk_scale() -> Self {
        let vae = VaeConfig::desk_scale();
        Self {
            preprocess: PreprocessConfig::desk_scale(),
            direct: DirectConfig {
                input_cube: vae.input_cube,
                channel_schedule: vae.channel_schedule.clone(),
                ..DirectConfig::default()
            },
            vae,
            shapes: ShapeSpec::default(),
            train_cases: 200,
            validation_cases: 120,
            corruption: CorruptionDistribution::default(),
            training_severity_scale: 0.25,
            feature_mode: FeatureMode::FakeDiceOnly,
        }
    }

    /// Full-resolution defaults: 128³ cubes, latent 128, 20000 iterations.
    pub fn full_scale() -> Self {
        let vae = VaeConfig::default();
        let mut cfg = Self::desk_scale();
        cfg.preprocess = PreprocessConfig::default();
        cfg.shapes.grid = [256; 3];
        cfg.shapes.size_range_voxels = (56.0, 80.0);
        cfg.shapes.max_offset_voxels = 16.0;
        cfg.direct.input_cube = vae.input_cube;
        cfg.direct.channel_schedule = vae.channel_schedule.clone();
        cfg.vae = vae;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.vae.validate()?;
        self.direct.validate()?;
        self.corruption.validate()?;
        if self.vae.input_cube != self.preprocess.cube_size || self.direct.input_cube != self.preprocess.cube_size {
            return Err(Error::Config("network input cube must equal cube_size".into()));
        }
        if usize::from(self.shapes.num_classes()) != self.vae.num_classes {
            return Err(Error::Config("shape.inclusion decides num_classes; they disagree".into()));
        }
        if self.train_cases < 2 || self.validation_cases < 1 {
            return Err(Error::Config("bench needs at least 2 training and 1 validation case".into()));
        }
        if !(0.0..=1.0).contains(&self.training_severity_scale) {
            return Err(Error::Config("oracle.training_severity_scale must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Reads a config file on top of `base`.
    pub fn load(path: &Path, base: Self) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = base;
        for (key, value) in parse_pairs(&text)? {
            cfg.set(&key, &value)?;
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `text` on top of `self`.
    pub fn apply_str(mut self, text: &str) -> Result<Self> {
        for (key, value) in parse_pairs(text)? {
            self.set(&key, &value)?;
        }
        self.sync();
        self.validate()?;
        Ok(self)
    }

    fn sync(&mut self) {
        self.vae.input_cube = self.preprocess.cube_size;
        self.direct.input_cube = self.preprocess.cube_size;
        self.vae.num_classes = usize::from(self.shapes.num_classes());
        self.direct.num_classes = self.vae.num_classes;
    }

    /// Sets one key; see [`Self::render`] for the full key list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "preprocess.target_spacing_mm" => self.preprocess.target_spacing_mm = num(key, v)?,
            "preprocess.cube_size" => self.preprocess.cube_size = num(key, v)?,
            "preprocess.rotation_degrees" => self.preprocess.rotation_degrees = list(key, v)?,
            "preprocess.max_translation_voxels" => self.preprocess.max_translation_voxels = num(key, v)?,
            "shape.family" => {
                self.shapes.family = ShapeFamily::parse(v).ok_or_else(|| bad(key, v))?;
            }
            "shape.grid" => {
                let g: Vec<usize> = list(key, v)?;
                self.shapes.grid = g.try_into().map_err(|_| bad(key, v))?;
            }
            "shape.spacing_mm" => self.shapes.spacing_mm = num(key, v)?,
            "shape.size_range_voxels" => self.shapes.size_range_voxels = range(key, v)?,
            "shape.axis_ratio_range" => self.shapes.axis_ratio_range = range(key, v)?,
            "shape.bend_range" => self.shapes.bend_range = range(key, v)?,
            "shape.lobe_count_range" => self.shapes.lobe_count_range = range(key, v)?,
            "shape.max_rotation_degrees" => self.shapes.max_rotation_degrees = num(key, v)?,
            "shape.max_offset_voxels" => self.shapes.max_offset_voxels = num(key, v)?,
            "shape.inclusion" => {
                self.shapes.inclusion = match v {
                    "none" => None,
                    _ => Some(InclusionSpec { radius_fraction: range(key, v)? }),
                }
            }
            "vae.latent_dim" => self.vae.latent_dim = num(key, v)?,
            "vae.channel_schedule" => self.vae.channel_schedule = list(key, v)?,
            "vae.lambda_kl" => self.vae.lambda_kl = num(key, v)?,
            "vae.learning_rate" => self.vae.learning_rate = num(key, v)?,
            "vae.momentum" => self.vae.momentum = num(key, v)?,
            "vae.iterations" => self.vae.iterations = num(key, v)?,
            "vae.batch_size" => self.vae.batch_size = num(key, v)?,
            "vae.mc_samples" => self.vae.mc_samples = num(key, v)?,
            "bench.train_cases" => self.train_cases = num(key, v)?,
            "bench.validation_cases" => self.validation_cases = num(key, v)?,
            "oracle.training_severity_scale" => self.training_severity_scale = num(key, v)?,
            "regressor.feature_mode" => self.feature_mode = FeatureMode::parse(v).ok_or_else(|| bad(key, v))?,
            "direct.channel_schedule" => self.direct.channel_schedule = list(key, v)?,
            "direct.hidden_units" => self.direct.hidden_units = num(key, v)?,
            "direct.learning_rate" => self.direct.learning_rate = num(key, v)?,
            "direct.momentum" => self.direct.momentum = num(key, v)?,
            "direct.iterations" => self.direct.iterations = num(key, v)?,
            "direct.batch_size" => self.direct.batch_size = num(key, v)?,
            _ => {
                let Some(op) = key.strip_prefix("corruption.") else {
                    return Err(Error::Config(format!("unknown key {key}")));
                };
                let operator = CorruptionOperator::parse(op).ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
                // "<weight> <lo>..<hi>"
                let (w, r) = v.split_once(char::is_whitespace).ok_or_else(|| bad(key, v))?;
                let mix = OperatorMix { operator, weight: num(key, w)?, severity_range: range(key, r.trim())? };
                let comps = &mut self.corruption.components;
                match comps.iter_mut().find(|c| c.operator == operator) {
                    Some(c) => *c = mix,
                    None => comps.push(mix),
                }
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a stable order.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        let p = &self.preprocess;
        line("preprocess.target_spacing_mm", p.target_spacing_mm.to_string());
        line("preprocess.cube_size", p.cube_size.to_string());
        line(
            "preprocess.rotation_degrees",
            p.rotation_degrees.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        line("preprocess.max_translation_voxels", p.max_translation_voxels.to_string());
        let sh = &self.shapes;
        line("shape.family", sh.family.name().into());
        line("shape.grid", join(&sh.grid));
        line("shape.spacing_mm", sh.spacing_mm.to_string());
        line("shape.size_range_voxels", fmt_range(sh.size_range_voxels));
        line("shape.axis_ratio_range", fmt_range(sh.axis_ratio_range));
        line("shape.bend_range", fmt_range(sh.bend_range));
        line("shape.lobe_count_range", format!("{}..{}", sh.lobe_count_range.0, sh.lobe_count_range.1));
        line("shape.max_rotation_degrees", sh.max_rotation_degrees.to_string());
        line("shape.max_offset_voxels", sh.max_offset_voxels.to_string());
        line("shape.inclusion", sh.inclusion.as_ref().map_or("none".into(), |i| fmt_range(i.radius_fraction)));
        let v = &self.vae;
        line("vae.latent_dim", v.latent_dim.to_string());
        line("vae.channel_schedule", join(&v.channel_schedule));
        line("vae.lambda_kl", v.lambda_kl.to_string());
        line("vae.learning_rate", v.learning_rate.to_string());
        line("vae.momentum", v.momentum.to_string());
        line("vae.iterations", v.iterations.to_string());
        line("vae.batch_size", v.batch_size.to_string());
        line("vae.mc_samples", v.mc_samples.to_string());
        line("bench.train_cases", self.train_cases.to_string());
        line("bench.validation_cases", self.validation_cases.to_string());
        for c in &self.corruption.components {
            line(&format!("corruption.{}", c.operator.name()), format!("{} {}", c.weight, fmt_range(c.severity_range)));
        }
        line("oracle.training_severity_scale", self.training_severity_scale.to_string());
        line("regressor.feature_mode", self.feature_mode.name().into());
        let d = &self.direct;
        line("direct.channel_schedule", join(&d.channel_schedule));
        line("direct.hidden_units", d.hidden_units.to_string());
        line("direct.learning_rate", d.learning_rate.to_string());
        line("direct.momentum", d.momentum.to_string());
        line("direct.iterations", d.iterations.to_string());
        line("direct.batch_size", d.batch_size.to_string());
        s
    }
}

/// Parses `key = value` lines, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim().to_string();
        if seen.insert(k.clone(), n).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

pub(crate) fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| bad(key, v))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| num(key, x)).collect()
}

fn range<T: std::str::FromStr>(key: &str, v: &str) -> Result<(T, T)> {
    let (a, b) = v.split_once("..").ok_or_else(|| bad(key, v))?;
    Ok((num(key, a)?, num(key, b)?))
}

fn fmt_range(r: (f64, f64)) -> String {
    format!("{}..{}", r.0, r.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        for cfg in [PipelineConfig::desk_scale(), PipelineConfig::full_scale()] {
            let back = PipelineConfig::desk_scale().apply_str(&cfg.render()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn overrides_and_errors() {
        let cfg = PipelineConfig::desk_scale()
            .apply_str("# comment\nvae.lambda_kl = 0.5\ncorruption.erode = 2 0.1..0.2\nshape.inclusion = 0.2..0.3\n")
            .unwrap();
        assert_eq!(cfg.vae.lambda_kl, 0.5);
        assert_eq!(cfg.vae.num_classes, 3);
        let erode = cfg.corruption.components.iter().find(|c| c.operator == CorruptionOperator::Erode).unwrap();
        assert_eq!((erode.weight, erode.severity_range), (2.0, (0.1, 0.2)));
        for bad in ["nope = 1", "vae.iterations = x", "vae.iterations = 1\nvae.iterations = 2", "novalue", "preprocess.cube_size = 48"] {
            assert!(PipelineConfig::desk_scale().apply_str(bad).is_err(), "{bad}");
        }
    }
}
