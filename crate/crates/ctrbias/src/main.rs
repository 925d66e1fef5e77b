use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctrbias::commands::{self, AnalyzeArgs, DebiasArgs, EvalArgs, SynthArgs, TrainArgs};
use ctrbias::pipeline::{self, PipelineConfig};
use ctrbias::schema_file::read_json;
use ctrbias::CliResult;
use ctrbias_core::debias::DebiasVariant;
use ctrbias_core::metrics::DEFAULT_K;
use ctrbias_core::model::Arch;
use ctrbias_core::train::Ablation;

#[derive(Parser)]
#[command(name = "ctrbias", version, about = "Diagnose and counteract feature-level bias in FM/NFM CTR models")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Fm,
    Nfm,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Fm => Arch::Fm,
            ArchArg::Nfm => Arch::Nfm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AblationArg {
    Unawareness,
    NoLinearPart,
    NoBiasLinearWeights,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Unawareness => Ablation::Unawareness,
            AblationArg::NoLinearPart => Ablation::NoLinearPart,
            AblationArg::NoBiasLinearWeights => Ablation::NoBiasLinearWeights,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum VariantArg {
    Reduction,
    Reconstruction,
    #[value(alias = "w/o_ratio")]
    WithoutRatio,
    #[value(alias = "w/o_residual")]
    WithoutResidual,
}

impl From<VariantArg> for DebiasVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Reduction => DebiasVariant::Reduction,
            VariantArg::Reconstruction => DebiasVariant::Reconstruction,
            VariantArg::WithoutRatio => DebiasVariant::WithoutRatio,
            VariantArg::WithoutResidual => DebiasVariant::WithoutResidual,
        }
    }
}

fn parse_split(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated fractions".into()),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log with controlled group positive ratios.
    Synth {
        /// SynthConfig JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Chronological train,val,test fractions of the log.
        #[arg(long, value_parser = parse_split, default_value = "0.8,0.1,0.1")]
        split: (f64, f64, f64),
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an FM or NFM model.
    Train {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Validation data for early stopping on UAUC.
        #[arg(long)]
        val: Option<PathBuf>,
        /// TrainConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fm")]
        arch: ArchArg,
        #[arg(long, value_enum)]
        ablation: Vec<AblationArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Group ratios, weight correlations and variance decomposition.
    Analyze {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce the bias-field weights, or reconstruct them from random-exposure data.
    Debias {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: Option<PathBuf>,
        /// Random-exposure data; selects reconstruction when no variant is given.
        #[arg(long)]
        unbiased: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        beta_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// UAUC, NDCG@K, EHR, P(j,K) and REO@K on a test file.
    Eval {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage on synthetic data.
    Pipeline {
        /// PipelineConfig JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        arch: Option<ArchArg>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth { config, seed, split, out } => {
            commands::synth(&SynthArgs { config, seed, split, out })?;
        }
        Command::Train {
            schema,
            train,
            val,
            config,
            arch,
            ablation,
            seed,
            out,
        } => {
            commands::train(&TrainArgs {
                schema,
                train,
                val,
                config,
                arch: arch.into(),
                ablations: ablation.into_iter().map(Into::into).collect(),
                seed,
                out,
            })?;
        }
        Command::Analyze {
            schema,
            model,
            train,
            test,
            out,
        } => {
            commands::analyze(&AnalyzeArgs {
                schema,
                model,
                train,
                test,
                out,
            })?;
        }
        Command::Debias {
            schema,
            model,
            train,
            unbiased,
            variant,
            alpha,
            beta_grid,
            gamma_grid,
            out,
        } => {
            commands::debias(&DebiasArgs {
                schema,
                model,
                train,
                unbiased,
                variant: variant.map(Into::into),
                alpha,
                beta_grid,
                gamma_grid,
                out,
            })?;
        }
        Command::Eval {
            schema,
            model,
            test,
            k,
            out,
        } => {
            commands::eval(&EvalArgs {
                schema,
                model,
                test,
                k,
                out,
            })?;
        }
        Command::Pipeline {
            config,
            seed,
            arch,
            k,
            out,
        } => {
            let mut cfg: PipelineConfig = match &config {
                Some(p) => read_json(p)?,
                None => PipelineConfig::default(),
            };
            if let Some(seed) = seed {
                cfg = cfg.with_seed(seed);
            }
            if let Some(arch) = arch {
                cfg.arch = arch.into();
            }
            if let Some(k) = k {
                cfg.k = k;
            }
            pipeline::run(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
