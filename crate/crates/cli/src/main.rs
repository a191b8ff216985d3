//! `rotmerge`: run the rotate-and-merge pipeline, evaluate its output,
//! curate annotations and generate synthetic scenes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or schema
//! error, 3 unresolved consensus.

mod commands;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rotmerge", version, about = "Rotate-and-merge OCR pipeline and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over scenes or images and write detections + manifest.
    Run(RunArgs),
    /// Score one or more detection files against annotations.
    Eval(EvalArgs),
    /// Fill consensus labels by majority vote; unresolved crops exit with 3.
    Consensus(ConsensusArgs),
    /// Print dataset statistics for an annotation file.
    Stats(StatsArgs),
    /// Generate a synthetic corpus of scene files with annotations.
    Generate(GenerateArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Scene descriptor JSON (repeatable).
    #[arg(long = "scene")]
    pub scenes: Vec<PathBuf>,
    /// Directory whose `*.json` scene files are all processed, sorted by name.
    #[arg(long)]
    pub scenes_dir: Option<PathBuf>,
    /// PNG image (repeatable); needs a `cmd:` backend.
    #[arg(long = "image")]
    pub images: Vec<PathBuf>,
    /// Re-run the configuration and inputs recorded in a manifest.
    #[arg(long, conflicts_with_all = ["scenes", "scenes_dir", "images", "rotation_step", "nms_iou", "backend", "mock_tolerance", "mock_corrupt", "timeout"])]
    pub from_manifest: Option<PathBuf>,
    /// Rotation step in degrees; must divide 360 (360 = no augmentation).
    #[arg(long)]
    pub rotation_step: Option<f64>,
    /// IoU above which NMS suppresses a lower-scored box.
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// `mock` or `cmd:<program and arguments>`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Mock backend: readable angle around upright, degrees.
    #[arg(long)]
    pub mock_tolerance: Option<f64>,
    /// Mock backend: corrupt one character of text read at a steep angle.
    #[arg(long)]
    pub mock_corrupt: bool,
    /// Subprocess backend response timeout, seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Rotations processed in parallel (default: number of processors).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Annotation JSON-lines file with resolved consensus.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Detections file, optionally labelled as `LABEL=PATH` (repeatable).
    #[arg(long = "detections", required = true)]
    pub detections: Vec<String>,
    #[arg(long)]
    pub case_sensitive: bool,
    /// Directory for `report.txt` and `report.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ConsensusArgs {
    pub annotations: PathBuf,
    /// Output file (default: rewrite the input in place).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    pub annotations: PathBuf,
    /// Also write the statistics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p_horizontal: f64,
    /// Half-width of the horizontal band, degrees.
    #[arg(long, default_value_t = 15.0)]
    pub band: f64,
    /// Word list, one word per line.
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Canvas size as WIDTHxHEIGHT.
    #[arg(long, default_value = "1920x1080")]
    pub canvas: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Self { code: 1, message: e.to_string() }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        Self { code: 2, message: e.to_string() }
    }

    pub fn unresolved(e: impl std::fmt::Display) -> Self {
        Self { code: 3, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run::execute(a),
        Command::Eval(a) => commands::eval::execute(a),
        Command::Consensus(a) => commands::curate::consensus(a),
        Command::Stats(a) => commands::curate::stats(a),
        Command::Generate(a) => commands::generate::execute(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("rotmerge: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
