//! `vitdd`: synthetic data, teacher, pseudo labels, student training,
//! evaluation and attention maps.

mod commands;
mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use vitdd::Error;

#[derive(Parser, Debug)]
#[command(name = "vitdd", version, about = "Multi-modal ViT for driver distraction detection")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Flat `key = value` file whose keys are flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log per-epoch progress and summaries to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic driver dataset plus a facial-expression set.
    GenSynth(GenSynthArgs),
    /// Train the face-only emotion teacher.
    TrainTeacher(TrainTeacherArgs),
    /// Detect faces, crop them and label them with the teacher.
    PseudoLabel(PseudoLabelArgs),
    /// Train the multi-task student.
    Train(TrainArgs),
    /// Accuracy, NLL and confusion of a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Class-token attention heatmaps for one sample.
    VizAttn(VizArgs),
    /// Partition a manifest by driver identity.
    Split(SplitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Sfddd,
    Aucdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Freeze {
    All,
    MsaOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DetectorKind {
    Stub,
    Synthetic,
    None,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub per_class: usize,
    #[arg(long, default_value = "16x16")]
    pub driver_res: String,
    #[arg(long, default_value = "8x8")]
    pub face_res: String,
    #[arg(long, default_value_t = 0.2)]
    pub face_less: f64,
    #[arg(long, default_value_t = 4)]
    pub drivers: usize,
    #[arg(long, default_value_t = 8)]
    pub fer_per_class: usize,
}

/// Optimization flags shared by both training commands.
#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    /// Base learning-rate preset under the paper profile.
    #[arg(long, value_enum, default_value_t = Dataset::Sfddd)]
    pub dataset: Dataset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Pad-and-crop augmentation on/off (profile default otherwise).
    #[arg(long)]
    pub crop: Option<bool>,
    #[arg(long)]
    pub flip: Option<bool>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct TrainTeacherArgs {
    /// `labels.csv` of the facial-expression set.
    #[arg(long)]
    pub fer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct PseudoLabelArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    /// Driver manifest with ground-truth distraction labels.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = DetectorKind::Synthetic)]
    pub detector: DetectorKind,
    /// Sidecar box file for the stub detector.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out manifest evaluated after every epoch; picks the best checkpoint.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Freeze::All)]
    pub freeze: Freeze,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub lambda_dist: Option<f64>,
    #[arg(long)]
    pub lambda_emo: Option<f64>,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest of the split to evaluate.
    #[arg(long)]
    pub split: PathBuf,
    /// Score emotions on pseudo-labeled records too.
    #[arg(long)]
    pub include_pseudo: bool,
    /// CSV report path (default: `eval.csv` next to the checkpoint).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct VizArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub sample: String,
    #[arg(long)]
    pub out: PathBuf,
    /// `all` or a comma list of 1-based layers.
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// Comma list of `dist` and `emo`.
    #[arg(long, default_value = "dist,emo")]
    pub queries: String,
    #[arg(long, default_value_t = 4)]
    pub zoom: usize,
    /// Blend the heatmap over the input at this opacity.
    #[arg(long)]
    pub overlay: Option<f64>,
    /// Interaction CSV per head instead of the head mean.
    #[arg(long)]
    pub per_head: bool,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `sample_id,driver_id` map.
    #[arg(long)]
    pub drivers: PathBuf,
    /// Comma list of training driver ids.
    #[arg(long)]
    pub train_ids: String,
    #[arg(long)]
    pub test_ids: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let root = Cli::command();
    let args = match config_file::expand(std::env::args_os().collect(), &root) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.0);
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match root.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot configure {} threads: {e}", cli.threads);
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
