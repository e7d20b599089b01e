//! Command-line interface for the photometric stereo toolkit.
//!
//! Subcommands cover the whole pipeline: `render` materializes synthetic
//! datasets, `train-psfcn` / `train-lcnet` / `train-psfcn-dagger` fit the
//! normal and lighting estimators, `predict` runs inference (network or
//! classic least squares), `eval` scores predictions, and `selftest`
//! exercises the fast cross-stack invariants. Every subcommand is
//! deterministic given `--seed`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod checkpoint;
mod dataset;
mod exit;
mod lights;
mod pfm;
mod predict;
mod report;
mod selftest;
mod traincmd;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use photostereo_core::lcnet::HeadMode;
use photostereo_core::psfcn::InputMode;

use crate::dataset::{read_scene_config, render_dataset};
use crate::predict::{run_eval, run_predict, EvalInputs, PredictInputs};
use crate::traincmd::{run_train_lcnet, run_train_psfcn, run_train_psfcn_dagger, TrainKnobs};

#[derive(Parser)]
#[command(
    name = "photostereo",
    version,
    about = "Photometric stereo: render, train, predict, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene config into a dataset directory
    Render(RenderArgs),
    /// Train the normal estimation network with ground-truth lights
    TrainPsfcn(TrainPsfcnArgs),
    /// Train the lighting estimation network
    TrainLcnet(TrainLcnetArgs),
    /// Train the normal network on lights estimated by a lighting model
    TrainPsfcnDagger(TrainDaggerArgs),
    /// Estimate a normal map from an image stack
    Predict(PredictArgs),
    /// Score a predicted normal map (and optionally a lighting rig)
    Eval(EvalArgs),
    /// Run the fast invariant checks
    Selftest,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene config JSON
    #[arg(long)]
    config: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Calibrated,
    Normalized,
    ImagesOnly,
}

impl From<ModeArg> for InputMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Calibrated => InputMode::Calibrated,
            ModeArg::Normalized => InputMode::Normalized,
            ModeArg::ImagesOnly => InputMode::ImagesOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadsArg {
    Classification,
    Regression,
}

impl From<HeadsArg> for HeadMode {
    fn from(heads: HeadsArg) -> Self {
        match heads {
            HeadsArg::Classification => HeadMode::Classification,
            HeadsArg::Regression => HeadMode::Regression,
        }
    }
}

#[derive(Args)]
struct CommonTrainArgs {
    /// Scene config JSON describing the training dataset
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint file to write
    #[arg(long)]
    out: PathBuf,
    /// Append per-epoch JSONL records here
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// Initial learning rate (halved every 5 epochs)
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    /// Observations drawn per scene each epoch
    #[arg(long, default_value_t = 16)]
    q: usize,
    /// Half-width of additive render noise during training
    #[arg(long, default_value_t = 0.025)]
    noise: f64,
    /// Observations used for the per-epoch held-out evaluation
    #[arg(long, default_value_t = 16)]
    eval_q: usize,
    /// Skip the per-epoch held-out evaluation
    #[arg(long)]
    no_eval: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Channel width multiplier (1.0 is the full-size network)
    #[arg(long, default_value_t = 0.25)]
    width: f64,
}

impl CommonTrainArgs {
    fn knobs(&self) -> TrainKnobs {
        TrainKnobs {
            config: self.config.clone(),
            out: self.out.clone(),
            log: self.log.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            q: self.q,
            noise: self.noise,
            eval_q: self.eval_q,
            no_eval: self.no_eval,
            seed: self.seed,
            width: self.width,
        }
    }
}

#[derive(Args)]
struct TrainPsfcnArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// How observations are presented to the network
    #[arg(long, value_enum, default_value_t = ModeArg::Calibrated)]
    mode: ModeArg,
}

#[derive(Args)]
struct TrainLcnetArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Output heads: binned classification or direct regression
    #[arg(long, value_enum, default_value_t = HeadsArg::Classification)]
    heads: HeadsArg,
    /// Weight of the intensity term in the loss
    #[arg(long, default_value_t = 1.0)]
    lambda_e: f64,
}

#[derive(Args)]
struct TrainDaggerArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Lighting model checkpoint that supplies estimated lights
    #[arg(long)]
    lcnet: PathBuf,
    /// How observations are presented to the network
    #[arg(long, value_enum, default_value_t = ModeArg::Calibrated)]
    mode: ModeArg,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory holding img_*.pfm (and optionally mask.pfm)
    #[arg(long)]
    images: PathBuf,
    /// Normal map PFM to write
    #[arg(long)]
    out: PathBuf,
    /// Normal estimation checkpoint
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use a classic solver instead of a checkpoint (only: l2)
    #[arg(long)]
    baseline: Option<String>,
    /// Lighting rig CSV
    #[arg(long)]
    lights: Option<PathBuf>,
    /// Lighting model checkpoint for estimating the rig
    #[arg(long)]
    lcnet: Option<PathBuf>,
    /// Foreground mask PFM (defaults to IMAGES/mask.pfm when present)
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted normal map PFM
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth normal map PFM
    #[arg(long)]
    gt: PathBuf,
    /// Foreground mask PFM (defaults to pixels where the truth is nonzero)
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Estimated lighting rig CSV
    #[arg(long)]
    pred_lights: Option<PathBuf>,
    /// Ground-truth lighting rig CSV
    #[arg(long)]
    gt_lights: Option<PathBuf>,
    /// Report JSON to write (it is always printed to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-pixel angular error visualization PFM
    #[arg(long)]
    error_map: Option<PathBuf>,
    /// Error that saturates the visualization, in degrees
    #[arg(long, default_value_t = 45.0)]
    error_ceiling: f64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Render(args) => {
            let config = read_scene_config(&args.config)?;
            let written = render_dataset(&config, &args.out)?;
            println!("wrote {written} samples to {}", args.out.display());
            Ok(())
        }
        Command::TrainPsfcn(args) => run_train_psfcn(&args.common.knobs(), args.mode.into()),
        Command::TrainLcnet(args) => {
            run_train_lcnet(&args.common.knobs(), args.heads.into(), args.lambda_e)
        }
        Command::TrainPsfcnDagger(args) => {
            run_train_psfcn_dagger(&args.common.knobs(), args.mode.into(), &args.lcnet)
        }
        Command::Predict(args) => run_predict(&PredictInputs {
            images: args.images,
            out: args.out,
            checkpoint: args.checkpoint,
            baseline: args.baseline,
            lights: args.lights,
            lcnet: args.lcnet,
            mask: args.mask,
        }),
        Command::Eval(args) => run_eval(&EvalInputs {
            pred: args.pred,
            gt: args.gt,
            mask: args.mask,
            pred_lights: args.pred_lights,
            gt_lights: args.gt_lights,
            out: args.out,
            error_map: args.error_map,
            error_ceiling: args.error_ceiling,
        }),
        Command::Selftest => selftest::run_selftest(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_info = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if is_info { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::classify(&err))
        }
    }
}
