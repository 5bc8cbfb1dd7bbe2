//! `dkn`: dataset synthesis, training, filtering, evaluation and self-test.
//!
//! Every setting can come from a flag, from a `key=value` file given with `--config`
//! (keys are the long flag names with `_` for `-`), or from the built-in default, in that
//! order. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dkn", version, about = "Deformable kernel networks for joint image filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a procedural RGB-D dataset and its manifest.
    Synth(SynthArgs),
    /// Train DKN or FDKN on the train split of a manifest.
    Train(TrainArgs),
    /// Filter one target image with a trained checkpoint.
    Filter(FilterArgs),
    /// Score a checkpoint on the test split of a manifest.
    Eval(EvalArgs),
    /// Run gradient, constraint, stitching and resampling checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pairs marked as test (default: a fifth of the count).
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// dkn | fdkn
    #[arg(long)]
    pub arch: Option<String>,
    /// 4 | 8 | 16
    #[arg(long)]
    pub scale: Option<usize>,
    /// bicubic | nearest_rb
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub residual: Option<bool>,
    #[arg(long)]
    pub learn_offsets: Option<bool>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay_every: Option<usize>,
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for the checkpoint, loss log and metadata.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct FilterArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Guidance image; without it every pass is self-guided.
    #[arg(long)]
    pub guidance: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Output image (.pfm, .pgm or .ppm).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// residual | plain; must match the checkpoint.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// range255 | centimeters
    #[arg(long)]
    pub scaling: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for the report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SelftestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub constraint_trials: Option<usize>,
    #[arg(long)]
    pub stitch_pairs: Option<usize>,
    #[arg(long)]
    pub stitch_size: Option<usize>,
    /// Test hook: `broken-mean-subtraction`.
    #[arg(long)]
    pub inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => failure::USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Filter(a) => commands::filter(a),
        Command::Eval(a) => commands::eval(a),
        Command::Selftest(a) => commands::selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
