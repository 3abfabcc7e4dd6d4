//! `poseforge`: dataset generation, staged training, evaluation,
//! augmentation previews and heatmap rendering.
//!
//! Exit codes: 0 success, 1 user error, 2 internal error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "poseforge", version, about = "Multi-scale structure-aware pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Base preset (toy or paper).
    #[arg(long, default_value = "toy")]
    pub preset: String,
    /// TOML or JSON config file layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted config override, e.g. `schedule.learning_rate=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed: the training seed for train/augment, the dataset seed for gen.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ablation name; repeatable or comma-separated.
    #[arg(long = "ablate", value_delimiter = ',')]
    pub ablate: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset root; takes precedence over POSEFORGE_DATA and `data.root`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic stick-figure dataset.
    Gen(commands::GenArgs),
    /// Run staged training.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint with conditional inference.
    Eval(commands::EvalArgs),
    /// Write augmented samples with JSON sidecars.
    Augment(commands::AugmentArgs),
    /// Render heatmap files or annotation files to PNG.
    Render(commands::RenderArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let global = match &cli.command {
        Command::Gen(a) => &a.global,
        Command::Train(a) => &a.global,
        Command::Eval(a) => &a.global,
        Command::Augment(a) => &a.global,
        Command::Render(a) => &a.global,
    };
    let level = if global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::Render(a) => commands::render(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = commands::exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
