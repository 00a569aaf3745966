//! `forgelens` command line: synthesize forgery datasets, train the three
//! detector scenarios, evaluate checkpoints and explain predictions with
//! Grad-CAM.

mod eval_cmd;
mod explain_cmd;
mod run_config;
mod synth_cmd;
mod train_cmd;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use forgelens::classifier::Scenario;
use forgelens::dataset::Split;
use forgelens::synth::ForgeryKind;

pub use run_config::RunConfig;

pub const DEFAULT_SYNTH_SEED: u64 = 7;
pub const DEFAULT_SPLIT_SEED: u64 = 11;
pub const DEFAULT_INIT_SEED: u64 = 1;
pub const DEFAULT_SHUFFLE_SEED: u64 = 2;
pub const DEFAULT_COMBINE_SEED: u64 = 3;

/// File names written inside `--out`.
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";
pub const CHECKPOINT_FILE: &str = "model.fgl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const COMBINED_MANIFEST_FILE: &str = "combined_manifest.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Parser, Debug)]
#[command(name = "forgelens", version, about = "Image forgery synthesis, detection and Grad-CAM explanation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate authentic and forged images, masks and a manifest.
    Synth(SynthArgs),
    /// Train a detector for one scenario.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Grad-CAM heatmaps, overlays and localization scores.
    Explain(ExplainArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::Train(_) => "train",
            Self::Eval(_) => "eval",
            Self::Explain(_) => "explain",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Output directory for images, masks and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Use the built-in procedural scene generator as the source.
    #[arg(long, conflicts_with = "images")]
    pub procedural: bool,
    /// Directory of source PNGs (used as authentic images and as forgery
    /// sources).
    #[arg(long, requires = "masks")]
    pub images: Option<PathBuf>,
    /// Directory of object masks for `--images`: `<stem>.png` or
    /// `<stem>_<anything>.png`.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Authentic images and forged images to produce (directory sources
    /// stop early when they run out).
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, value_parser = parse_forged_kind)]
    pub kind: ForgeryKind,
    #[arg(long, default_value_t = DEFAULT_SYNTH_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
    pub split_seed: u64,
    /// Hard paste mask and large regions only.
    #[arg(long)]
    pub easy: bool,
    /// JSON file overriding synthesis settings.
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
    /// Side length of procedural images.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// One or more manifests; several are merged and re-split.
    #[arg(long, alias = "manifest", required = true, num_args = 1..)]
    pub manifests: Vec<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    /// Weight initialization seed.
    #[arg(long, default_value_t = DEFAULT_INIT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SHUFFLE_SEED)]
    pub shuffle_seed: u64,
    /// Split seed used when several manifests are merged.
    #[arg(long, default_value_t = DEFAULT_COMBINE_SEED)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 64)]
    pub input_size: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val", value_parser = parse_split)]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected model input size; rejected if the checkpoint disagrees.
    #[arg(long)]
    pub input_size: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Explain the records of one manifest split (masks come from the
    /// manifest).
    #[arg(long, conflicts_with = "images")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "val", value_parser = parse_split)]
    pub split: Split,
    /// Explain individual PNG files.
    #[arg(long, num_args = 1..)]
    pub images: Vec<PathBuf>,
    /// Directory with a ground-truth mask per `--images` file, same file
    /// name.
    #[arg(long, requires = "images")]
    pub masks: Option<PathBuf>,
    /// Explain images predicted authentic too.
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = forgelens::gradcam::DEFAULT_BLEND)]
    pub blend: f32,
    #[arg(long, default_value_t = forgelens::gradcam::DEFAULT_TOP_FRACTION)]
    pub top_fraction: f64,
}

fn parse_forged_kind(s: &str) -> Result<ForgeryKind, String> {
    match s.parse::<ForgeryKind>() {
        Ok(ForgeryKind::None) => Err("the forgery kind must be copy_move or inpaint".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: forgelens::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: forgelens::Error| e.to_string())
}

/// Runs a parsed command. `argv` (without the program name) is recorded in
/// the run config.
pub fn run(cli: &Cli, argv: &[String]) -> anyhow::Result<()> {
    let rc = |resolved| RunConfig::new(&cli.command, argv, resolved);
    match &cli.command {
        Command::Synth(a) => synth_cmd::run(a, rc),
        Command::Train(a) => train_cmd::run(a, rc),
        Command::Eval(a) => eval_cmd::run(a, rc),
        Command::Explain(a) => explain_cmd::run(a, rc),
    }
}

/// Parses and runs, as the binary does.
pub fn run_from_args<I, S>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv)?;
    run(&cli, &argv[1..])
}
