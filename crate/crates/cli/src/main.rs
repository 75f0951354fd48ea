mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agripretext::model::Task;

#[derive(Parser, Debug)]
#[command(name = "agripretext", version, about = "Temporal pretext tasks for satellite image time series")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Sets the model, training, synth and probe seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Where to write run.json; defaults to the output directory.
    #[arg(long, global = true)]
    pub run_log: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic parcel time series.
    Synth(SynthArgs),
    /// Grid an AOI into chips and build monthly cubes from an imagery source.
    Ingest(IngestArgs),
    /// Compute the dominant temporal-frequency map of a cube.
    Freqmap(FreqmapArgs),
    /// Report bitemporal pair and label statistics of a cube.
    Pairs(PairsArgs),
    /// Train a pretext task and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Compare analytic and finite-difference gradients at toy scale.
    Gradcheck(GradcheckArgs),
    /// Linear-probe a frozen encoder on the synthetic parcel benchmark.
    Probe(ProbeArgs),
    /// Render channel 0 of a frequency map to PNG.
    ExportPng(ExportPngArgs),
}

#[derive(Args, Debug, Default)]
pub struct GapArgs {
    /// Exact month gaps, e.g. `3,6,9`.
    #[arg(long, conflicts_with = "max_gap")]
    pub gaps: Option<String>,
    /// Any gap from 0 to this many months.
    #[arg(long)]
    pub max_gap: Option<u32>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub months: Option<usize>,
    #[arg(long)]
    pub parcels: Option<usize>,
    /// Per-parcel periods, e.g. `6,12`.
    #[arg(long)]
    pub periods: Option<String>,
    /// Per-parcel phases in months.
    #[arg(long)]
    pub phases: Option<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// First month, `YYYY-MM`.
    #[arg(long)]
    pub start: Option<String>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// AOI raster (binary PGM, nonzero = inside).
    #[arg(long)]
    pub aoi: PathBuf,
    /// Imagery source directory.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// First write a synthetic mock source for the gridded chips.
    #[arg(long)]
    pub mock: bool,
    /// Expand every chip to its 3×3 neighborhood.
    #[arg(long)]
    pub neighbors: bool,
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long)]
    pub chip_size: Option<usize>,
    #[arg(long)]
    pub min_overlap: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub floor: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FreqmapArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PairsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory for pairs.json and run.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub gap: GapArgs,
    /// Time-difference classes; defaults to the model setting.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub task: Option<Task>,
    /// Cube store to train on.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Frequency map for the fp task; computed from the cube when omitted.
    #[arg(long)]
    pub fmap: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub gap: GapArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Fraction of pairs held out for evaluation.
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub coords: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Directory for gradcheck.json and run.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Pretrained checkpoint; a randomly initialized encoder when omitted.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Directory for probe.json and run.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the unlabeled pretraining cube of the benchmark here.
    #[arg(long)]
    pub write_pretrain: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportPngArgs {
    /// Frequency map store.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
