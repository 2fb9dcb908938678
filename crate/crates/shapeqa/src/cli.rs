//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use shapeqa_core::regress::fit_linear;

use crate::checkpoint;
use crate::config::PipelineConfig;
use crate::files::{read_samples, write_samples, write_training_curve, RegressorFile};
use crate::pipeline::{
    assess_validation, collect_stage, direct_stage, direct_validation, feature_of, format_table, train_vae_stage,
    vae_config, Bench, ComparisonRow, Layout,
};
use crate::report::{build_report, AssessedCase, AssessmentReport, Metadata};
use crate::{vmsk, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "shapeqa", version, about = "Segmentation quality estimation from a learned shape prior")]
pub struct Cli {
    /// `key = value` file applied on top of the desk-scale defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "shapeqa-out")]
    pub out_dir: PathBuf,
    /// Flag cases whose predicted Dice falls below this value.
    #[arg(long, global = true)]
    pub alarm_threshold: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialize the synthetic bench under <out-dir>/bench.
    SynthGen,
    /// Train the VAE shape prior on the bench training labels.
    TrainVae,
    /// Jackknife the preparation segmenters and write samples.csv.
    CollectSamples,
    /// Fit the linear quality regressor on samples.csv.
    FitRegressor,
    /// Predict the quality of every VMSK mask in a directory.
    Assess {
        #[arg(long)]
        input: PathBuf,
        /// Optional directory of same-named ground-truth masks.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Report predicted against real Dice on the bench validation split.
    Evaluate,
    /// Train and evaluate the direct-regression baseline.
    BaselineDirect,
    /// Print the side-by-side comparison table.
    Compare,
    /// Print the effective configuration.
    PrintConfig,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I: IntoIterator<Item = T>, T: Into<OsString> + Clone>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: kind={} message={}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(path) => PipelineConfig::load(path, PipelineConfig::desk_scale()),
        None => Ok(PipelineConfig::desk_scale()),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(Error::io(path))
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.alarm_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config("--alarm-threshold must lie in [0, 1]".into()));
        }
    }
    let cfg = load_config(cli)?;
    let seed = cli.seed;
    let out = Layout::new(&cli.out_dir);
    ensure_dir(&out.root)?;
    match &cli.command {
        Command::PrintConfig => print!("{}", cfg.render()),
        Command::SynthGen => {
            let hash = Bench::generate(&cfg, seed)?.write(&out.bench())?;
            println!("bench written to {} (manifest sha256 {hash})", out.bench().display());
        }
        Command::TrainVae => {
            let (bench, _) = Bench::read(&out.bench())?;
            let every = (cfg.vae.iterations / 20).max(1);
            let (model, log) = train_vae_stage(&bench, &cfg, seed, |r| {
                if (r.iteration + 1) % every == 0 {
                    eprintln!("iteration {} loss {:.4} fake_dice {:.4} kl {:.3}", r.iteration + 1, r.loss, r.fake_dice, r.kl_term);
                }
            })?;
            write_training_curve(&out.training_curve(), &log)?;
            let hash = checkpoint::save(&out.checkpoint(), &model)?;
            println!("checkpoint {} (sha256 {hash})", out.checkpoint().display());
        }
        Command::CollectSamples => {
            let (bench, _) = Bench::read(&out.bench())?;
            let (model, _) = checkpoint::load(&out.checkpoint(), Some(&vae_config(&cfg, seed)))?;
            let (_, samples) = collect_stage(&bench, &cfg, seed, &model)?;
            write_samples(&out.samples(), &samples)?;
            println!("{} samples written to {}", samples.len(), out.samples().display());
        }
        Command::FitRegressor => {
            let (_, ckpt_hash) = checkpoint::load(&out.checkpoint(), Some(&vae_config(&cfg, seed)))?;
            let samples = read_samples(&out.samples(), cfg.vae.lambda_kl)?;
            let params = fit_linear(&samples, cfg.feature_mode)?;
            let file = RegressorFile { params, vae_checkpoint_hash: ckpt_hash };
            file.save(&out.regressor())?;
            print!("{}", file.render());
        }
        Command::Assess { input, labels } => {
            let (model, ckpt_hash, file, reg_hash) = load_models(&cfg, seed, &out)?;
            let mut cases = Vec::new();
            for path in vmsk_files(input)? {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let mask = vmsk::read(&path)?;
                let real_dice = match labels {
                    Some(dir) => {
                        let label = vmsk::read(&dir.join(path.file_name().unwrap_or_default()))?;
                        Some(shapeqa_core::dice::multiclass_dice(&label, &mask, usize::from(label.num_classes()))?.mean)
                    }
                    None => None,
                };
                cases.push(AssessedCase { case_id: id, feature: feature_of(&model, &mask, &cfg)?, real_dice });
            }
            let report = report_for(&cases, &file, ckpt_hash, reg_hash, seed, cli.alarm_threshold, None);
            write_report(&report, &out.root, "assessment")?;
        }
        Command::Evaluate => {
            let (model, ckpt_hash, file, reg_hash) = load_models(&cfg, seed, &out)?;
            let (bench, bench_hash) = Bench::read(&out.bench())?;
            let cases = assess_validation(&bench, &model, &cfg)?;
            let report = report_for(&cases, &file, ckpt_hash, reg_hash, seed, cli.alarm_threshold, Some(bench_hash));
            write_report(&report, &out.root, "evaluation")?;
            if let Some(a) = &report.aggregate {
                println!("{}", serde_json::to_string(a).expect("aggregate serializes"));
            }
        }
        Command::BaselineDirect => {
            let (bench, _) = Bench::read(&out.bench())?;
            let (model, _) = checkpoint::load(&out.checkpoint(), Some(&vae_config(&cfg, seed)))?;
            let (predictions, _) = collect_stage(&bench, &cfg, seed, &model)?;
            let direct = direct_stage(&cfg, seed, &predictions)?;
            let row = ComparisonRow::from_pairs("Direct Regression", &direct_validation(&bench, &direct, &cfg)?)?;
            let path = out.direct_rows();
            fs::write(&path, serde_json::to_string_pretty(&row).expect("row serializes") + "\n").map_err(Error::io(&path))?;
            print!("{}", format_table(&[row]));
        }
        Command::Compare => {
            let report = AssessmentReport::read_json(&out.root.join("evaluation.json"))?;
            let agg = report.aggregate.ok_or_else(|| Error::Config("evaluation.json has no aggregate; run evaluate".into()))?;
            let vae_row = ComparisonRow {
                method: format!("VAE-{}", cfg.vae.latent_dim),
                mae: agg.mae,
                std_residual: agg.std_residual,
                pearson: agg.pearson,
                spearman: agg.spearman,
            };
            let path = out.direct_rows();
            let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
            let direct: ComparisonRow = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
            let table = format_table(&[vae_row, direct]);
            let path = out.root.join("comparison.txt");
            fs::write(&path, &table).map_err(Error::io(&path))?;
            print!("{table}");
        }
    }
    Ok(())
}

fn load_models(
    cfg: &PipelineConfig,
    seed: u64,
    out: &Layout,
) -> Result<(shapeqa_core::vae::VaeModel<f32>, String, RegressorFile, String)> {
    let (model, ckpt_hash) = checkpoint::load(&out.checkpoint(), Some(&vae_config(cfg, seed)))?;
    let (file, reg_hash) = RegressorFile::load(&out.regressor())?;
    if file.vae_checkpoint_hash != ckpt_hash {
        return Err(Error::ConfigMismatch("regressor was fitted against a different checkpoint".into()));
    }
    Ok((model, ckpt_hash, file, reg_hash))
}

fn report_for(
    cases: &[AssessedCase],
    file: &RegressorFile,
    ckpt_hash: String,
    reg_hash: String,
    seed: u64,
    alarm: Option<f64>,
    bench_hash: Option<String>,
) -> AssessmentReport {
    let mut meta = Metadata::new(ckpt_hash, reg_hash, seed, &file.params);
    meta.alarm_threshold = alarm;
    meta.bench_manifest_hash = bench_hash;
    build_report(cases, &file.params, meta)
}

fn write_report(report: &AssessmentReport, dir: &Path, stem: &str) -> Result<()> {
    report.write_json(&dir.join(format!("{stem}.json")))?;
    report.write_case_csv(&dir.join(format!("{stem}_cases.csv")))?;
    report.write_scatter_csv(&dir.join(format!("{stem}_scatter.csv")))?;
    println!("report written to {}", dir.join(format!("{stem}.json")).display());
    Ok(())
}

fn vmsk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vmsk"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no .vmsk files in {}", dir.display())));
    }
    Ok(files)
}
