use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use faithgen::control::HallucinationTag;
use faithgen::model::Ablation;
use faithgen::pipeline::{
    cmd_bucket, cmd_contrast, cmd_evaluate, cmd_generate, cmd_prepare, cmd_report, cmd_train,
    PipelineError, RunConfig,
};

/// Faithful KG-to-text generation: contrastive training, hallucination
/// control tokens and fact-level evaluation.
#[derive(Parser)]
#[command(name = "faithgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory for artifacts; one directory per configuration.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Builds the vocabulary and dataset statistics.
    Prepare(StageArgs),
    /// Builds one contrastive positive/negative set per training sample.
    Contrast(StageArgs),
    /// Scores references and assigns hallucination-control buckets.
    Bucket(StageArgs),
    /// Trains the model and writes a resumable checkpoint.
    Train {
        #[command(flatten)]
        stage: StageArgs,
        /// Overrides the training objective from the config file.
        #[arg(long, value_parser = ["full", "control-only", "contrastive-only"])]
        ablation: Option<String>,
    },
    /// Generates texts for the evaluation split.
    Generate {
        #[command(flatten)]
        stage: StageArgs,
        /// Control token to condition on (default: hal_low).
        #[arg(long, value_parser = ["hal_low", "hal_medium", "hal_high"])]
        tag: Option<String>,
    },
    /// Runs the fact-enumeration evaluation over the generations.
    Evaluate {
        #[command(flatten)]
        stage: StageArgs,
        /// Judge backend to use.
        #[arg(long, value_parser = ["mock", "remote"])]
        judge: Option<String>,
    },
    /// Merges evaluation summaries of several runs into a CSV and a chart.
    Report {
        /// Output directory for report.csv and prh_chart.svg.
        #[arg(long)]
        out: PathBuf,
        /// Run directories to merge, in table order.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load(stage: &StageArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&stage.config)?;
    if let Some(seed) = stage.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Prepare(stage) => cmd_prepare(&load(&stage)?, &stage.out),
        Command::Contrast(stage) => cmd_contrast(&load(&stage)?, &stage.out),
        Command::Bucket(stage) => cmd_bucket(&load(&stage)?, &stage.out),
        Command::Train { stage, ablation } => {
            let ablation = ablation
                .map(|a| a.parse::<Ablation>().map_err(PipelineError::Config))
                .transpose()?;
            cmd_train(&load(&stage)?, &stage.out, ablation)
        }
        Command::Generate { stage, tag } => {
            let tag = match tag {
                Some(t) => Some(HallucinationTag::parse(&t).ok_or_else(|| {
                    PipelineError::Config(format!("unknown control tag {t:?}"))
                })?),
                None => None,
            };
            cmd_generate(&load(&stage)?, &stage.out, tag)
        }
        Command::Evaluate { stage, judge } => {
            cmd_evaluate(&load(&stage)?, &stage.out, judge.as_deref())
        }
        Command::Report { out, runs } => cmd_report(&runs, &out).map(|_| ()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
