//! `ircgan`: reproducible experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
//! 4 numeric divergence, 1 anything else. `IRCGAN_THREADS` overrides the
//! worker count.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ircgan::Error;

#[derive(Parser)]
#[command(name = "ircgan", version, about = "Conditional adversarial segmentation, augmentation and thermal analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator/discriminator pair on a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a checkpoint's generator over images.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the binarised output as `<name>_mask.pgm`.
        #[arg(long)]
        mask: bool,
        /// Also dump encoder and decoder activations under `latent/<name>/`.
        #[arg(long)]
        latent: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Build a paired dataset: a synthetic suite or superimposed target.
    Augment(AugmentArgs),
    /// Staged retraining with an optional from-scratch arm.
    Incremental {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Manifest of held-out test pairs.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Band counts and flashover alarm over a frame sequence.
    Thermal {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        frames: Vec<PathBuf>,
    },
    /// Finite-difference gradient suite; non-zero exit on any failure.
    Gradcheck,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    out: PathBuf,
    /// `xor` or `accuracy`.
    #[arg(long, default_value = "xor")]
    metric: String,
    /// XOR denominator: `gt_foreground` or `total_pixels`.
    #[arg(long, default_value = "gt_foreground")]
    denominator: String,
    /// Directory of predicted masks, matched to `--gt` by file name.
    #[arg(long, requires = "gt", conflicts_with_all = ["data"])]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Manifest whose inputs are segmented and targets are ground truth.
    #[arg(long, required_unless_present = "pred")]
    data: Option<PathBuf>,
    /// Segment with this checkpoint.
    #[arg(long, requires = "data", conflicts_with = "isodata")]
    checkpoint: Option<PathBuf>,
    /// Segment with a per-image IsoData threshold.
    #[arg(long, requires = "data")]
    isodata: bool,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[arg(long)]
    out: PathBuf,
    /// Synthetic suite parameters (key=value); requires a `count` key.
    #[arg(long, conflicts_with_all = ["template", "transforms", "backgrounds"])]
    config: Option<PathBuf>,
    /// Gray target template; pixels at or above `--threshold` are the target.
    #[arg(long, requires_all = ["transforms", "backgrounds"])]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = ircgan::augment::SUPPORT_THRESHOLD)]
    threshold: u8,
    #[arg(long, default_value = "target")]
    label: String,
    /// CSV `angle_deg,scale,cx,cy`: the template centre lands on `(cx, cy)`.
    #[arg(long)]
    transforms: Option<PathBuf>,
    /// One background per transform row.
    #[arg(long, num_args = 1..)]
    backgrounds: Vec<PathBuf>,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Spec(_) | Error::InvalidArgument(_)) => 2,
        Some(Error::Data(_) | Error::Io { .. } | Error::Format { .. } | Error::Shape { .. } | Error::Unreliable { .. }) => 3,
        Some(Error::Divergence { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("IRCGAN_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                ircgan::parallel::init_threads(n);
            }
            _ => {
                eprintln!("error: IRCGAN_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let result = match cli.command {
        Command::Train { config, data, out } => commands::train(&config, &data, &out),
        Command::Infer { checkpoint, out, mask, latent, inputs } => commands::infer(&checkpoint, &out, mask, latent, &inputs),
        Command::Eval(args) => commands::eval(&args),
        Command::Augment(args) => commands::augment(&args),
        Command::Incremental { plan, config, test, out } => commands::incremental(&plan, &config, &test, &out),
        Command::Thermal { config, out, frames } => commands::thermal(config.as_deref(), &out, &frames),
        Command::Gradcheck => commands::gradcheck(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
