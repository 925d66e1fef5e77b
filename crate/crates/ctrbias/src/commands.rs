//! One function per subcommand. Each reads its inputs, writes its outputs
//! and a manifest into `out`, and returns the manifest along with the
//! command's report where it has one.

use std::fs;
use std::path::{Path, PathBuf};

use ctrbias_core::analysis::{bias_chain_report, BiasChainReport};
use ctrbias_core::codec::{self, Provenance};
use ctrbias_core::data::{chronological_split, Dataset, SplitTag};
use ctrbias_core::debias::{
    grid_search_reconstruction, reduce_weights, DebiasConfig, DebiasVariant, GridCell, UnbiasedRatios,
};
use ctrbias_core::metrics::EvalReport;
use ctrbias_core::model::{Arch, ModelParams};
use ctrbias_core::schema::{FeatureIndex, FieldSchema};
use ctrbias_core::synth::{generate_synthetic, SynthConfig};
use ctrbias_core::train::{self, Ablation, TrainConfig};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::csv_io::{read_dataset, write_dataset};
use crate::error::{CliError, CliResult};
use crate::manifest::{digest_hex, RunManifest};
use crate::reports::{write_group_table, write_scatter, write_search_table};
use crate::schema_file::{read_json, write_json, SchemaFile};

pub const MODEL_FILE: &str = "model.bin";
pub const SCHEMA_FILE: &str = "schema.json";
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.8, 0.1, 0.1);

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn json_digest<T: Serialize>(value: &T) -> String {
    digest_hex(serde_json::to_string(value).expect("configs serialize").as_bytes())
}

/// A schema file with its parsed schema and the category vocabulary that
/// grows as datasets are read.
pub struct Workspace {
    pub file: SchemaFile,
    pub schema: FieldSchema,
    pub vocabulary: FeatureIndex,
}

impl Workspace {
    pub fn load(path: &Path, manifest: &mut RunManifest) -> CliResult<Self> {
        let file = SchemaFile::load(path)?;
        manifest.input(path)?;
        let schema = file.schema()?;
        let vocabulary = file.vocabulary(&schema)?;
        Ok(Self {
            file,
            schema,
            vocabulary,
        })
    }

    pub fn read(&mut self, path: &Path, tag: SplitTag, manifest: &mut RunManifest) -> CliResult<Dataset> {
        let d = read_dataset(path, &self.schema, &mut self.vocabulary, self.file.label_threshold, tag)?;
        manifest.input(path)?;
        info!("read {} samples from {}", d.len(), path.display());
        Ok(d)
    }

    pub fn group_labels(&self) -> Vec<String> {
        self.file.group_labels(&self.schema, &self.vocabulary)
    }

    pub fn load_model(&self, path: &Path, manifest: &mut RunManifest) -> CliResult<(ModelParams, Provenance)> {
        let bytes = fs::read(path).map_err(|e| CliError::input(path, e))?;
        manifest.input(path)?;
        Ok(codec::deserialize_with_provenance(&bytes, Some(&self.schema))?)
    }
}

fn save_model(dir: &Path, params: &ModelParams, provenance: &Provenance, manifest: &mut RunManifest) -> CliResult<()> {
    let path = dir.join(MODEL_FILE);
    fs::write(&path, codec::serialize_with(params, provenance)).map_err(|e| CliError::output(&path, e))?;
    manifest.output(dir, MODEL_FILE)
}

fn save_json<T: Serialize>(dir: &Path, name: &str, value: &T, manifest: &mut RunManifest) -> CliResult<()> {
    write_json(&dir.join(name), value)?;
    manifest.output(dir, name)
}

pub struct SynthArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: (f64, f64, f64),
    pub out: PathBuf,
}

pub const SYNTH_FILES: [&str; 5] = ["train.csv", "val.csv", "test.csv", "unbiased_val.csv", "unbiased_test.csv"];

/// Writes the logged data split chronologically into train/val/test, the
/// two randomly exposed splits, and the schema.
pub fn synth(args: &SynthArgs) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::start("synth");
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => {
            manifest.input(p)?;
            read_json(p)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    synth_with(&cfg, args.split, &args.out, manifest)
}

pub fn synth_with(
    cfg: &SynthConfig,
    split: (f64, f64, f64),
    out: &Path,
    mut manifest: RunManifest,
) -> CliResult<RunManifest> {
    manifest.seed = Some(cfg.seed);
    manifest.config_digest = Some(json_digest(cfg));
    let data = generate_synthetic(cfg)?;
    let (train, val, test) = chronological_split(&data.train, split)?;
    create_dir(out)?;
    let sets = [&train, &val, &test, &data.unbiased_val, &data.unbiased_test];
    for (name, d) in SYNTH_FILES.iter().zip(sets) {
        write_dataset(&out.join(name), d, &data.vocabulary)?;
        manifest.output(out, name)?;
    }
    let file = SchemaFile::from_parts(&train.schema, &data.vocabulary, None);
    save_json(out, SCHEMA_FILE, &file, &mut manifest)?;
    save_json(out, "truth.json", &data.truth, &mut manifest)?;
    manifest.finish(out)
}

pub struct TrainArgs {
    pub schema: PathBuf,
    pub train: PathBuf,
    pub val: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub arch: Arch,
    pub ablations: Vec<Ablation>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Trains a model and writes it with its report and the schema resolved
/// against every category seen, which later commands should use.
pub fn train(args: &TrainArgs) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::start("train");
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => {
            manifest.input(p)?;
            read_json(p)?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.ablations.extend(args.ablations.iter().copied());
    cfg.validate()?;
    let mut ws = Workspace::load(&args.schema, &mut manifest)?;
    let train_set = ws.read(&args.train, SplitTag::Train, &mut manifest)?;
    let val_set = match &args.val {
        Some(p) => ws.read(p, SplitTag::ValNbt, &mut manifest)?,
        None => Dataset::new(ws.schema.clone(), Vec::new(), SplitTag::ValNbt),
    };
    manifest.seed = Some(cfg.seed);
    manifest.config_digest = Some(json_digest(&cfg));

    let started = std::time::Instant::now();
    let (params, mut report) = train::train(&ws.schema, &train_set, &val_set, &cfg, args.arch)?;
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    for w in &report.warnings {
        warn!("{w}");
    }
    info!(
        "trained {:?} for {} epochs (best {}) in {:.1}s",
        args.arch,
        report.epochs.len(),
        report.best_epoch,
        report.wall_clock_secs
    );

    create_dir(&args.out)?;
    let provenance = Provenance::from([
        ("command".to_string(), "train".to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("config_digest".to_string(), json_digest(&cfg)),
    ]);
    save_model(&args.out, &params, &provenance, &mut manifest)?;
    save_json(&args.out, "train_report.json", &report, &mut manifest)?;
    save_json(&args.out, "train_config.json", &cfg, &mut manifest)?;
    save_json(&args.out, SCHEMA_FILE, &ws.file.resolved(&ws.vocabulary), &mut manifest)?;
    manifest.finish(&args.out)
}

pub struct AnalyzeArgs {
    pub schema: PathBuf,
    pub model: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    pub out: PathBuf,
}

pub fn analyze(args: &AnalyzeArgs) -> CliResult<(RunManifest, BiasChainReport)> {
    let mut manifest = RunManifest::start("analyze");
    let mut ws = Workspace::load(&args.schema, &mut manifest)?;
    let (params, _) = ws.load_model(&args.model, &mut manifest)?;
    let train_set = ws.read(&args.train, SplitTag::Train, &mut manifest)?;
    let test_set = ws.read(&args.test, SplitTag::TestNbt, &mut manifest)?;
    let labels = ws.group_labels();
    let report = bias_chain_report(&params, &train_set, &test_set, &ws.schema, Some(&labels))?;
    for w in &report.warnings {
        warn!("{w}");
    }
    create_dir(&args.out)?;
    save_json(&args.out, "analysis.json", &report, &mut manifest)?;
    write_scatter(&args.out.join("scatter.csv"), &report.scatter)?;
    manifest.output(&args.out, "scatter.csv")?;
    Ok((manifest.finish(&args.out)?, report))
}

pub struct DebiasArgs {
    pub schema: PathBuf,
    pub model: PathBuf,
    pub train: Option<PathBuf>,
    pub unbiased: Option<PathBuf>,
    pub variant: Option<DebiasVariant>,
    pub alpha: Option<f64>,
    pub beta_grid: Option<Vec<f64>>,
    pub gamma_grid: Option<Vec<f64>>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    pub variant: DebiasVariant,
    pub source_model_digest: String,
    pub model_digest: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub unbiased_ratios: Option<UnbiasedRatios>,
    pub search: Vec<GridCell>,
}

/// Resolves the variant and rejects flag combinations that do not match
/// it: reduction takes no random-exposure data and no grids,
/// reconstruction needs that data and the training set and takes no α.
pub fn debias_config(args: &DebiasArgs) -> CliResult<DebiasConfig> {
    let variant = args.variant.unwrap_or(if args.unbiased.is_some() {
        DebiasVariant::Reconstruction
    } else {
        DebiasVariant::Reduction
    });
    let usage = |m: &str| Err(CliError::Usage(m.to_string()));
    let mut cfg = DebiasConfig {
        variant,
        ..DebiasConfig::default()
    };
    if variant == DebiasVariant::Reduction {
        if args.unbiased.is_some() {
            return usage("reduction does not use random-exposure data; drop --unbiased or pick a reconstruction variant");
        }
        if args.beta_grid.is_some() || args.gamma_grid.is_some() {
            return usage("--beta-grid/--gamma-grid apply to reconstruction only");
        }
        cfg.alpha = args.alpha.unwrap_or(0.0);
    } else {
        if args.alpha.is_some() {
            return usage("--alpha applies to reduction only");
        }
        if args.unbiased.is_none() {
            return usage("reconstruction needs random-exposure data (--unbiased)");
        }
        if args.train.is_none() {
            return usage("reconstruction needs the training data (--train) for the weight-ratio regression");
        }
        if let Some(g) = &args.beta_grid {
            cfg.beta_grid = g.clone();
        }
        if let Some(g) = &args.gamma_grid {
            cfg.gamma_grid = g.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn debias(args: &DebiasArgs) -> CliResult<(RunManifest, DebiasReport)> {
    let cfg = debias_config(args)?;
    let mut manifest = RunManifest::start("debias");
    manifest.config_digest = Some(json_digest(&cfg));
    let mut ws = Workspace::load(&args.schema, &mut manifest)?;
    let (params, _) = ws.load_model(&args.model, &mut manifest)?;
    let source = hex::encode(codec::model_digest(&params));
    let mut provenance = Provenance::from([
        ("command".to_string(), "debias".to_string()),
        ("variant".to_string(), cfg.variant.as_str().to_string()),
        ("source_model".to_string(), source.clone()),
    ]);

    let (new_params, mut report) = if cfg.variant == DebiasVariant::Reduction {
        provenance.insert("alpha".into(), cfg.alpha.to_string());
        let p = reduce_weights(&params, &ws.schema, cfg.alpha)?;
        let report = DebiasReport {
            variant: cfg.variant,
            source_model_digest: source,
            model_digest: String::new(),
            alpha: Some(cfg.alpha),
            beta: None,
            gamma: None,
            unbiased_ratios: None,
            search: Vec::new(),
        };
        (p, report)
    } else {
        let train_set = ws.read(args.train.as_ref().unwrap(), SplitTag::Train, &mut manifest)?;
        let unbiased = ws.read(args.unbiased.as_ref().unwrap(), SplitTag::ValDt, &mut manifest)?;
        let found = grid_search_reconstruction(&params, &ws.schema, &train_set, &unbiased, &cfg)?;
        info!(
            "{}: beta {} gamma {} over {} grid points",
            cfg.variant.as_str(),
            found.beta,
            found.gamma,
            found.table.len()
        );
        for j in &found.ratios.fallback {
            warn!("group {j} has no random-exposure samples; using the global ratio");
        }
        provenance.insert("beta".into(), found.beta.to_string());
        provenance.insert("gamma".into(), found.gamma.to_string());
        let report = DebiasReport {
            variant: cfg.variant,
            source_model_digest: source,
            model_digest: String::new(),
            alpha: None,
            beta: Some(found.beta),
            gamma: Some(found.gamma),
            unbiased_ratios: Some(found.ratios),
            search: found.table,
        };
        (found.params, report)
    };
    report.model_digest = hex::encode(codec::model_digest(&new_params));

    create_dir(&args.out)?;
    save_model(&args.out, &new_params, &provenance, &mut manifest)?;
    save_json(&args.out, "debias_report.json", &report, &mut manifest)?;
    if !report.search.is_empty() {
        write_search_table(&args.out.join("search.csv"), &report.search)?;
        manifest.output(&args.out, "search.csv")?;
    }
    Ok((manifest.finish(&args.out)?, report))
}

pub struct EvalArgs {
    pub schema: PathBuf,
    pub model: PathBuf,
    pub test: PathBuf,
    pub k: usize,
    pub out: PathBuf,
}

/// Writes the report even when some metrics are undefined, then fails with
/// [`CliError::Metrics`] so the exit code reflects it.
pub fn eval(args: &EvalArgs) -> CliResult<(RunManifest, EvalReport)> {
    let mut manifest = RunManifest::start("eval");
    let mut ws = Workspace::load(&args.schema, &mut manifest)?;
    let (params, _) = ws.load_model(&args.model, &mut manifest)?;
    let test_set = ws.read(&args.test, SplitTag::TestNbt, &mut manifest)?;
    let labels = ws.group_labels();
    let report = EvalReport::compute(&params, &test_set, args.k, Some(&labels))?;
    create_dir(&args.out)?;
    save_json(&args.out, "eval_report.json", &report, &mut manifest)?;
    write_group_table(&args.out.join("groups.csv"), &report)?;
    manifest.output(&args.out, "groups.csv")?;
    let manifest = manifest.finish(&args.out)?;
    if !report.errors.is_empty() {
        return Err(CliError::Metrics(report.errors.join("; ")));
    }
    Ok((manifest, report))
}
