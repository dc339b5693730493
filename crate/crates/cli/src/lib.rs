//! `gapcheck` command-line surface.
//!
//! Each subcommand is a plain function over parsed arguments so tests can
//! drive the pipeline without spawning processes.

pub mod commands;
pub mod manifest;
pub mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use gapcheck_core::metrics::ErrorDenominator;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gapcheck",
    version,
    about = "Detect and score gaps in generated legal analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check records and annotations files, reporting every violation.
    Validate(ValidateArgs),
    /// Label distribution and dataset balance of an annotations file.
    Stats(StatsArgs),
    /// Citation coverage and screening signals per record.
    Screen(ScreenArgs),
    /// Run the detector over records.
    Detect(DetectArgs),
    /// Metrics report for a detection results file.
    Evaluate(EvaluateArgs),
    /// Detector runs over several demonstration counts.
    Ablate(AblateArgs),
    /// Over- and under-prediction table per label.
    Errors(ErrorsArgs),
    /// Write a mock script whose replies echo gold labels.
    MockScript(MockScriptArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    #[default]
    Example,
    Instance,
}

impl From<DenominatorArg> for ErrorDenominator {
    fn from(d: DenominatorArg) -> Self {
        match d {
            DenominatorArg::Example => ErrorDenominator::Example,
            DenominatorArg::Instance => ErrorDenominator::Instance,
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// JSON output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// JSONL output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectorFlags {
    /// Chat-completions URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    /// Scripted backend (JSONL keyed by prompt digest) instead of HTTP.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 500)]
    pub retry_backoff_ms: u64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Training annotations used as demonstrations.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Records for training annotations that do not embed their record.
    #[arg(long)]
    pub train_records: Option<PathBuf>,
    /// Number of demonstrations.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Results JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Gold annotations; without them only corpus-level rates are reported.
    #[arg(long, visible_alias = "annotations")]
    pub gold: Option<PathBuf>,
    /// Records file, enables ROUGE of generations against targets.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub error_denominator: DenominatorArg,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One-row CSV summary.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub train_records: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16, 20])]
    pub ks: Vec<usize>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full per-k reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Args)]
pub struct ErrorsArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, visible_alias = "annotations")]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub error_denominator: DenominatorArg,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockScriptArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, visible_alias = "annotations")]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(a) => commands::validate(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Screen(a) => commands::screen(&a),
        Command::Detect(a) => commands::detect(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Errors(a) => commands::errors(&a),
        Command::MockScript(a) => commands::mock_script(&a),
    }
}

/// Parses `args` (program name first) and runs, mapping errors to exit codes.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.use_stderr() {
                true => ExitCode::from(2),
                false => ExitCode::SUCCESS,
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gapcheck: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
