//! `pa-forge` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 failure of an
//! external scorer, trainer or predictor.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// `println!` through [`emit`].
macro_rules! out {
    ($($t:tt)*) => {
        $crate::emit(format_args!($($t)*))
    };
}

mod basic;
mod pipeline;
mod serve;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] pa_forge::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_contract_failure() => 3,
            CliError::Lib(_) => 2,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Prints one line to stdout; a reader that went away ends the process
/// quietly, as `head` expects.
pub fn emit(line: impl std::fmt::Display) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(2);
    }
}

#[derive(Parser, Debug)]
#[command(name = "pa-forge", version, about = "Pseudo-annotation synthesis, refinement, selection and evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Otsu threshold of a float map stored as a tensor file.
    Otsu(OtsuArgs),
    /// SLIC superpixels of an image, written as a label-map tensor.
    Slic(SlicArgs),
    /// Superpixel refinement of one mask.
    Refine(RefineArgs),
    /// Initial pseudo-annotations from attention tensors.
    InitPa(InitPaArgs),
    /// Quality selection of pseudo-annotations through external scorers.
    Select(SelectArgs),
    /// mIoU against pseudo-annotations, region integrity and RIC.
    Metrics(MetricsArgs),
    /// Select-train-predict evolution through an external trainer and predictor.
    Evolve(EvolveArgs),
    /// Writes a synthetic world of flat colored discs.
    Synth(SynthArgs),
    /// Serves a reference scorer over the line protocol on stdin/stdout.
    Score(ScoreArgs),
    /// Serves the contracting stub model over the line protocol.
    StubModel(StubModelArgs),
}

#[derive(Args, Debug)]
pub struct OtsuArgs {
    /// Rank-2 (h, w) tensor.
    #[arg(long)]
    pub input: PathBuf,
    /// Writes the binarized map here as a mask image.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SlicOpts {
    /// Target number of superpixels.
    #[arg(long, default_value_t = 400)]
    pub k: usize,
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
}

#[derive(Args, Debug)]
pub struct SlicArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub slic: SlicOpts,
    /// Label map output (rank-2 tensor).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RefineOpts {
    /// Minimum overlap for a region to join the mask.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Regions covering this share of the frame or more are never added.
    #[arg(long, default_value_t = 0.4)]
    pub beta: f64,
    /// overlap-ratio or strict-iou.
    #[arg(long, default_value = "overlap-ratio")]
    pub mode: String,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[arg(long)]
    pub mask: PathBuf,
    /// Superpixel label map; computed from --image when absent.
    #[arg(long, conflicts_with = "image")]
    pub labels: Option<PathBuf>,
    #[arg(long, required_unless_present = "labels")]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    pub k: usize,
    #[command(flatten)]
    pub refine: RefineOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitPaArgs {
    /// Frames with class labels.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of per-video attention tensors.
    #[arg(long)]
    pub attention: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Uses the actor branch only.
    #[arg(long)]
    pub no_action: bool,
    /// Writes frames with the pseudo-annotation outline drawn on top.
    #[arg(long)]
    pub emit_overlay: Option<PathBuf>,
    #[command(flatten)]
    pub refine: RefineOpts,
}

#[derive(Args, Debug, Clone)]
pub struct ScorerOpts {
    /// Command serving composite realism scores.
    #[arg(long)]
    pub discriminator: String,
    /// Command serving class probabilities of masked foregrounds.
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub disc_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    pub cls_threshold: f64,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Frames with pseudo-annotations and class labels.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub scorers: ScorerOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes the selected entries as a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// File listing prediction masks, one path per line.
    #[arg(long)]
    pub predictions: PathBuf,
    /// File listing pseudo-annotation masks, aligned with the predictions.
    #[arg(long)]
    pub pas: PathBuf,
    /// File listing superpixel label maps.
    #[arg(long, conflicts_with = "frames")]
    pub labels: Option<PathBuf>,
    /// File listing frame images; superpixels are computed with --k.
    #[arg(long, required_unless_present = "labels")]
    pub frames: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub ric_alpha: f64,
    /// micro or macro.
    #[arg(long, default_value = "micro")]
    pub aggregation: String,
    #[command(flatten)]
    pub refine: RefineOpts,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    /// Frames with initial pseudo-annotations and class labels.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated videos held out for validation.
    #[arg(long, value_delimiter = ',', required = true)]
    pub val_videos: Vec<String>,
    #[arg(long)]
    pub trainer: String,
    /// Defaults to the trainer; an identical command shares its process.
    #[arg(long)]
    pub predictor: Option<String>,
    #[command(flatten)]
    pub scorers: ScorerOpts,
    #[arg(long, default_value_t = 5)]
    pub max_versions: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    pub eps_version: f64,
    #[arg(long, default_value_t = 0.005)]
    pub eps_epoch: f64,
    #[arg(long, default_value_t = 0.5)]
    pub ric_alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Receives every version's pseudo-annotations and the report.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub refine: RefineOpts,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScorerKind {
    /// Seam discriminator: reads the composite and its sibling mask.
    Seam,
    /// Palette classifier: one flat color per class.
    Palette,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long, value_enum)]
    pub kind: ScorerKind,
    /// `class:r,g,b` entries separated by `;`, for the palette classifier.
    #[arg(long)]
    pub palette: Option<String>,
}

#[derive(Args, Debug)]
pub struct StubModelArgs {
    /// Manifest of the initial pseudo-annotations.
    #[arg(long)]
    pub initial: PathBuf,
    /// Manifest with ground-truth masks in the pseudo-annotation column.
    #[arg(long)]
    pub truth: PathBuf,
    /// Superpixels the stub fixes errors in; 0 works on pixels.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Videos that contract as their own group.
    #[arg(long, value_delimiter = ',')]
    pub val_videos: Vec<String>,
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Otsu(a) => basic::otsu(&a),
        Command::Slic(a) => basic::slic(&a),
        Command::Refine(a) => basic::refine(&a),
        Command::InitPa(a) => pipeline::init_pa(&a),
        Command::Select(a) => pipeline::select(&a),
        Command::Metrics(a) => pipeline::metrics(&a),
        Command::Evolve(a) => pipeline::evolve(&a),
        Command::Synth(a) => serve::synth(&a),
        Command::Score(a) => serve::score(&a),
        Command::StubModel(a) => serve::stub_model(&a),
    }
}

fn init_logging() {
    let level = match std::env::var("PA_FORGE_LOG").as_deref() {
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        _ => log::LevelFilter::Error,
    };
    env_logger::Builder::new().filter_level(level).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
