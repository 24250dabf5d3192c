//! `cade`: debias, evaluate, diagnose and tune over multi-view logit files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use cade_core::engine::{Task, ViewKind};
use cade_core::CadeError;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{DivergenceArg, ImageStreamArg};

#[derive(Parser, Debug)]
#[command(
    name = "cade",
    version,
    about = "Contrastive adaptive debiasing for multi-view logits"
)]
struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug). RUST_LOG also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score every record and write one decision per line.
    Debias(DebiasArgs),
    /// Compute accuracy, MAE and the sliced report for a decisions file.
    Evaluate(EvaluateArgs),
    /// Directional distribution of one view's argmax.
    Diagnose(DiagnoseArgs),
    /// Option-order and option-token perturbation table.
    Perturb(PerturbArgs),
    /// Seeded random search over the hyperparameters.
    Tune(TuneArgs),
    /// Synthetic records from a generator spec.
    Generate(GenerateArgs),
    /// Collect every report in a directory into one CSV.
    Report(ReportArgs),
    /// Refresh record logits from a logit server.
    #[cfg(feature = "provider")]
    Fetch(FetchArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModeArgs {
    #[arg(long, value_enum)]
    pub divergence: Option<DivergenceArg>,
    #[arg(long, value_enum)]
    pub image_stream: Option<ImageStreamArg>,
    #[arg(long)]
    pub disable_gate: bool,
    #[arg(long)]
    pub disable_context_penalty: bool,
    #[arg(long)]
    pub disable_adaptive: bool,
    #[arg(long)]
    pub disable_prior_penalty: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_kl: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DebiasArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub decisions: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "q")]
    pub view: ViewKind,
    #[arg(long)]
    pub by_pillar: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Reverse,
    Random,
    Lowercase,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BindingArg {
    Semantic,
    Positional,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// One or more schemes; repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub scheme: Vec<SchemeArg>,
    /// Seed for the random-order scheme.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Predict with a single view's argmax.
    #[arg(long, default_value = "full", conflicts_with = "cade")]
    pub view: ViewKind,
    /// Predict with the debiased decision instead.
    #[arg(long)]
    pub cade: bool,
    /// Whether logits follow their option or stay at their slot.
    #[arg(long, value_enum, default_value = "semantic")]
    pub binding: BindingArg,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Mcq,
    Regression,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Mcq => Task::Mcq,
            TaskArg::Regression => Task::Regression,
        }
    }
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Fraction of the validation set scored per trial.
    #[arg(long)]
    pub subset: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-trial trace (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Best parameters and re-scored finalists (JSON). Printed when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub mode: ModeArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Generator spec (JSON); the bundled demo spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's records per cell.
    #[arg(long)]
    pub n_records: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of report JSON files written by `evaluate`.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(feature = "provider")]
#[derive(Args, Debug)]
pub struct FetchArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Logit server URL; falls back to the config file, then CADE_ENDPOINT.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "q,ctx,img,full")]
    pub views: Vec<ViewKind>,
}

fn exit_code(e: &CadeError) -> u8 {
    match e {
        CadeError::Io(_) => 3,
        CadeError::Protocol(_) | CadeError::EndpointUnavailable { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = config::Config::load(cli.config.as_deref()).and_then(|cfg| {
        let ctx = commands::Context {
            config: cfg,
            config_path: cli.config.clone(),
        };
        match &cli.command {
            Command::Debias(a) => commands::debias(&ctx, a),
            Command::Evaluate(a) => commands::evaluate(&ctx, a),
            Command::Diagnose(a) => commands::diagnose(&ctx, a),
            Command::Perturb(a) => commands::perturb(&ctx, a),
            Command::Tune(a) => commands::tune(&ctx, a),
            Command::Generate(a) => commands::generate(&ctx, a),
            Command::Report(a) => commands::report(&ctx, a),
            #[cfg(feature = "provider")]
            Command::Fetch(a) => commands::fetch(&ctx, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&CadeError::InvalidInput("x".into())), 2);
        assert_eq!(
            exit_code(&CadeError::Parse {
                line: 1,
                message: "x".into()
            }),
            2
        );
        assert_eq!(exit_code(&std::io::Error::other("x").into()), 3);
        assert_eq!(exit_code(&CadeError::Protocol("x".into())), 4);
    }

    #[test]
    fn debias_flags_parse() {
        let cli = Cli::try_parse_from([
            "cade",
            "debias",
            "--in",
            "a",
            "--out",
            "b",
            "--alpha",
            "0.7",
            "--lambda-kl",
            "2",
            "--beta",
            "1",
            "--tau",
            "0.9",
            "--image-stream",
            "full+img",
            "--disable-gate",
        ])
        .unwrap();
        let Command::Debias(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.hyper.lambda_kl, Some(2.0));
        assert_eq!(a.mode.image_stream, Some(ImageStreamArg::FullPlusImg));
        assert!(a.mode.disable_gate && !a.mode.disable_prior_penalty);
    }
}
