use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use inclusivo_cli::{
    apply_overrides, cmd_chat_export, cmd_evaluate, cmd_extract, cmd_generate, cmd_infer,
    cmd_normalize, cmd_run_all, cmd_split, InferFlags, Overrides,
};
use inclusivo_core::config::PipelineConfig;
use inclusivo_core::error::Error;
use inclusivo_core::manifest::StageManifest;

/// Synthetic-data generation and LLM evaluation pipeline for
/// inclusive-language detection in Italian job ads.
#[derive(Parser)]
#[command(name = "inclusivo", version, about)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Override every stage seed at once.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    /// Log level: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment the seed corpus and annotate placeholder templates.
    Extract,
    /// Split templates into train/test before expansion.
    Split,
    /// Merge chunks and expand placeholders into labeled samples.
    Generate,
    /// Export chat-format training rows for fine-tuning tools.
    ChatExport,
    /// Query every (model, prompt, test sample) combination.
    Infer {
        /// Per-endpoint in-flight request cap.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Retries per request after the first attempt.
        #[arg(long)]
        max_retries: Option<u32>,
        /// Per-request timeout.
        #[arg(long)]
        timeout_seconds: Option<u64>,
        /// Resume an interrupted run by id.
        #[arg(long)]
        resume: Option<String>,
    },
    /// Extract binary labels from raw model responses.
    Normalize,
    /// Compute metrics tables, distributions, and length/position plots.
    Evaluate,
    /// Run the whole pipeline in order.
    RunAll,
}

fn exit_code(error: &Error) -> u8 {
    match error.category() {
        "config" => 2,
        "missing-artifact" => 3,
        "input" | "vocabulary" | "prompt" | "report" => 4,
        "leakage" => 5,
        "auth" => 6,
        "inference" => 7,
        _ => 8,
    }
}

fn print_summary(manifest: &StageManifest) {
    let counts: Vec<String> = manifest
        .counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    println!("{}: {}", manifest.stage, counts.join(" "));
}

fn run(cli: Cli) -> Result<(), Error> {
    let config_path = cli
        .config
        .ok_or_else(|| Error::Config("--config <file> is required".into()))?;
    let config = PipelineConfig::load(&config_path)?;
    let config = apply_overrides(
        config,
        &Overrides {
            output_dir: cli.output_dir,
            seed_override: cli.seed_override,
        },
    );
    match cli.command {
        Command::Extract => print_summary(&cmd_extract(&config)?),
        Command::Split => print_summary(&cmd_split(&config)?),
        Command::Generate => print_summary(&cmd_generate(&config)?),
        Command::ChatExport => print_summary(&cmd_chat_export(&config)?),
        Command::Infer {
            parallelism,
            max_retries,
            timeout_seconds,
            resume,
        } => {
            let flags = InferFlags {
                parallelism,
                max_retries,
                timeout_seconds,
                resume,
            };
            print_summary(&cmd_infer(&config, &flags)?);
        }
        Command::Normalize => print_summary(&cmd_normalize(&config)?),
        Command::Evaluate => print_summary(&cmd_evaluate(&config)?),
        Command::RunAll => {
            for manifest in cmd_run_all(&config)? {
                print_summary(&manifest);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error[{}]: {error}", error.category());
            ExitCode::from(exit_code(&error))
        }
    }
}
