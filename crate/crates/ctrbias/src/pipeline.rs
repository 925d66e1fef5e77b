//! `ctrbias pipeline`: synthetic data → training → bias analysis →
//! reduction and reconstruction → evaluation, all through the same files
//! the individual subcommands read and write.
//!
//! Layout under the output directory:
//!
//! ```text
//! data/        synth outputs (CSV splits, schema.json, truth.json)
//! model/       base model and training report
//! analysis/    bias-chain report of the base model
//! debias/<variant>/   adjusted models and search tables
//! eval/<model>_<test>/ evaluation reports
//! summary.json headline numbers, manifest.json
//! ```

use std::path::Path;

use ctrbias_core::analysis::{CorrelationPair, VarianceReport};
use ctrbias_core::debias::{DebiasVariant, DEFAULT_GRID};
use ctrbias_core::metrics::{EvalReport, DEFAULT_K};
use ctrbias_core::model::Arch;
use ctrbias_core::synth::SynthConfig;
use ctrbias_core::train::TrainConfig;
use log::info;
use serde::{Deserialize, Serialize};

use crate::commands::{self, create_dir, AnalyzeArgs, DebiasArgs, EvalArgs, TrainArgs, MODEL_FILE, SCHEMA_FILE};
use crate::error::CliResult;
use crate::manifest::RunManifest;
use crate::schema_file::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub arch: Arch,
    /// Chronological train/validation/test fractions of the logged data.
    pub split: (f64, f64, f64),
    pub k: usize,
    pub alpha: f64,
    pub beta_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            train: TrainConfig {
                learning_rate: 5e-3,
                l2: 2e-5,
                embedding_dim: 8,
                ..TrainConfig::default()
            },
            arch: Arch::Fm,
            split: commands::DEFAULT_SPLIT,
            k: DEFAULT_K,
            alpha: 0.0,
            beta_grid: DEFAULT_GRID.to_vec(),
            gamma_grid: DEFAULT_GRID.to_vec(),
        }
    }
}

impl PipelineConfig {
    /// One seed for both data generation and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.train.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub uauc: Option<f64>,
    pub ndcg: Option<f64>,
    pub reo: Option<f64>,
}

impl From<&EvalReport> for Snapshot {
    fn from(r: &EvalReport) -> Self {
        Self {
            uauc: r.uauc.as_ref().map(|u| u.value),
            ndcg: r.ndcg.as_ref().map(|u| u.value),
            reo: r.reo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstructed {
    pub beta: f64,
    pub gamma: f64,
    pub unbiased_test: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub base_model_sha256: String,
    /// Learned bias-field weights against training positive ratios.
    pub weight_vs_ratio: CorrelationPair,
    pub variance: VarianceReport,
    pub biased_test_base: Snapshot,
    pub biased_test_reduced: Snapshot,
    pub unbiased_test_base: Snapshot,
    pub unbiased_test_reduced: Snapshot,
    pub reconstruction: Reconstructed,
    pub without_ratio: Reconstructed,
    pub without_residual: Reconstructed,
}

pub fn run(cfg: &PipelineConfig, out: &Path) -> CliResult<PipelineSummary> {
    let mut manifest = RunManifest::start("pipeline");
    manifest.seed = Some(cfg.synth.seed);
    create_dir(out)?;
    write_json(&out.join("pipeline_config.json"), cfg)?;
    manifest.output(out, "pipeline_config.json")?;

    let data = out.join("data");
    info!("generating synthetic data");
    commands::synth_with(&cfg.synth, cfg.split, &data, RunManifest::start("synth"))?;

    let model_dir = out.join("model");
    let train_config = out.join("train_config.json");
    write_json(&train_config, &cfg.train)?;
    manifest.output(out, "train_config.json")?;
    info!("training {:?}", cfg.arch);
    commands::train(&TrainArgs {
        schema: data.join(SCHEMA_FILE),
        train: data.join("train.csv"),
        val: Some(data.join("val.csv")),
        config: Some(train_config),
        arch: cfg.arch,
        ablations: Vec::new(),
        seed: None,
        out: model_dir.clone(),
    })?;
    let schema = model_dir.join(SCHEMA_FILE);
    let base_model = model_dir.join(MODEL_FILE);

    let (_, analysis) = commands::analyze(&AnalyzeArgs {
        schema: schema.clone(),
        model: base_model.clone(),
        train: data.join("train.csv"),
        test: data.join("test.csv"),
        out: out.join("analysis"),
    })?;

    let debias = |variant: DebiasVariant| -> CliResult<(std::path::PathBuf, commands::DebiasReport)> {
        let dir = out.join("debias").join(variant.as_str());
        let reduction = variant == DebiasVariant::Reduction;
        let (_, report) = commands::debias(&DebiasArgs {
            schema: schema.clone(),
            model: base_model.clone(),
            train: (!reduction).then(|| data.join("train.csv")),
            unbiased: (!reduction).then(|| data.join("unbiased_val.csv")),
            variant: Some(variant),
            alpha: reduction.then_some(cfg.alpha),
            beta_grid: (!reduction).then(|| cfg.beta_grid.clone()),
            gamma_grid: (!reduction).then(|| cfg.gamma_grid.clone()),
            out: dir.clone(),
        })?;
        Ok((dir.join(MODEL_FILE), report))
    };
    let evaluate = |model: &Path, test: &str, name: &str| -> CliResult<Snapshot> {
        let (_, report) = commands::eval(&EvalArgs {
            schema: schema.clone(),
            model: model.to_path_buf(),
            test: data.join(test),
            k: cfg.k,
            out: out.join("eval").join(name),
        })?;
        Ok(Snapshot::from(&report))
    };

    info!("debiasing and evaluating");
    let (reduced_model, _) = debias(DebiasVariant::Reduction)?;
    let mut reconstructed = Vec::new();
    for variant in [
        DebiasVariant::Reconstruction,
        DebiasVariant::WithoutRatio,
        DebiasVariant::WithoutResidual,
    ] {
        let (model, report) = debias(variant)?;
        reconstructed.push(Reconstructed {
            beta: report.beta.unwrap_or_default(),
            gamma: report.gamma.unwrap_or_default(),
            unbiased_test: evaluate(&model, "unbiased_test.csv", &format!("{}_unbiased", variant.as_str()))?,
        });
    }
    let summary = PipelineSummary {
        seed: cfg.synth.seed,
        base_model_sha256: hex_digest_of(&base_model)?,
        weight_vs_ratio: analysis.weight_correlations.ratio.clone(),
        variance: analysis.variance.clone(),
        biased_test_base: evaluate(&base_model, "test.csv", "base_test")?,
        biased_test_reduced: evaluate(&reduced_model, "test.csv", "reduction_test")?,
        unbiased_test_base: evaluate(&base_model, "unbiased_test.csv", "base_unbiased")?,
        unbiased_test_reduced: evaluate(&reduced_model, "unbiased_test.csv", "reduction_unbiased")?,
        reconstruction: reconstructed[0],
        without_ratio: reconstructed[1],
        without_residual: reconstructed[2],
    };
    write_json(&out.join("summary.json"), &summary)?;
    manifest.output(out, "summary.json")?;
    manifest.finish(out)?;
    Ok(summary)
}

fn hex_digest_of(path: &Path) -> CliResult<String> {
    crate::manifest::file_digest(path).map_err(|e| crate::error::CliError::input(path, e))
}
