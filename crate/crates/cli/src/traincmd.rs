//! The three training subcommands.
//!
//! Each one reads a scene config, synthesizes the dataset in memory,
//! trains the requested network, prints one line per epoch, optionally
//! appends the same records to a JSONL log, and writes a checkpoint that
//! carries the optimizer state so training is resumable in principle.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use photostereo_core::lcnet::{HeadMode, Lcnet, LcnetConfig};
use photostereo_core::psfcn::{InputMode, Psfcn, PsfcnConfig};
use photostereo_core::train::{
    generate_dataset, train_lcnet, train_psfcn, Dataset, EpochStats, PsfcnLightSource,
    TrainConfig,
};

use crate::checkpoint::{self, Model};
use crate::dataset::read_scene_config;
use crate::report::{TrainLog, TrainLogLine};

/// Knobs shared by every training subcommand; field names mirror the
/// command-line flags.
pub struct TrainKnobs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub q: usize,
    pub noise: f64,
    pub eval_q: usize,
    pub no_eval: bool,
    pub seed: u64,
    pub width: f64,
}

impl TrainKnobs {
    fn train_config(&self, intensity_loss_weight: f64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            initial_lr: self.lr,
            q_per_sample: self.q,
            noise_amplitude: self.noise,
            seed: self.seed,
            eval_per_epoch: !self.no_eval,
            eval_q: self.eval_q,
            intensity_loss_weight,
        }
    }

    fn dataset(&self) -> Result<Dataset> {
        let scene = read_scene_config(&self.config)?;
        generate_dataset(&scene.spec).context("generating the dataset")
    }
}

/// Prints an epoch line and mirrors it into the log.
struct EpochSink {
    log: TrainLog,
    last: Instant,
    failure: Option<anyhow::Error>,
}

impl EpochSink {
    fn new(log: TrainLog) -> Self {
        EpochSink { log, last: Instant::now(), failure: None }
    }

    fn record(&mut self, stats: &EpochStats) {
        let wall = self.last.elapsed().as_secs_f64();
        self.last = Instant::now();
        let mut line = format!(
            "epoch {} lr {:.6} loss {:.6}",
            stats.epoch, stats.learning_rate, stats.mean_loss
        );
        if let Some(mae) = stats.val_mae_degrees {
            line.push_str(&format!(" val_mae_degrees {mae:.3}"));
        }
        if let Some(re) = stats.val_intensity_re {
            line.push_str(&format!(" val_intensity_re {re:.4}"));
        }
        println!("{line} wall {wall:.1}s");
        let line = TrainLogLine {
            epoch: stats.epoch,
            loss: stats.mean_loss,
            mae_degrees: stats.val_mae_degrees,
            lr: stats.learning_rate,
            wall_time_s: wall,
        };
        if self.failure.is_none() {
            if let Err(err) = self.log.append(&line) {
                self.failure = Some(err);
            }
        }
    }

    fn finish(self) -> Result<()> {
        match self.failure {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }
}

pub fn run_train_psfcn(knobs: &TrainKnobs, mode: InputMode) -> Result<()> {
    let data = knobs.dataset()?;
    let config = PsfcnConfig {
        width_multiplier: knobs.width,
        input_mode: mode,
        train_q: knobs.q,
    };
    let net: Psfcn<f32> = Psfcn::build(config, knobs.seed)?;
    let tc = knobs.train_config(1.0);
    let mut sink = EpochSink::new(TrainLog::create(knobs.log.as_deref())?);
    let state =
        train_psfcn(&net, &data, PsfcnLightSource::GroundTruth, &tc, |s| sink.record(s))?;
    sink.finish()?;
    checkpoint::save(&knobs.out, &Model::Psfcn(net), knobs.seed, knobs.epochs, Some(&state))?;
    println!("saved {}", knobs.out.display());
    Ok(())
}

pub fn run_train_psfcn_dagger(
    knobs: &TrainKnobs,
    mode: InputMode,
    lcnet_path: &PathBuf,
) -> Result<()> {
    let data = knobs.dataset()?;
    let ck = checkpoint::load(lcnet_path)?;
    let lighting: Lcnet<f32> = match ck.model {
        Model::Lcnet(net) => net,
        Model::Psfcn(_) => anyhow::bail!(
            "{} holds a normal estimation model; --lcnet needs a lighting model",
            lcnet_path.display()
        ),
    };
    let config = PsfcnConfig {
        width_multiplier: knobs.width,
        input_mode: mode,
        train_q: knobs.q,
    };
    let net: Psfcn<f32> = Psfcn::build(config, knobs.seed)?;
    let tc = knobs.train_config(1.0);
    let mut sink = EpochSink::new(TrainLog::create(knobs.log.as_deref())?);
    let source = PsfcnLightSource::Estimated(&lighting);
    let state = train_psfcn(&net, &data, source, &tc, |s| sink.record(s))?;
    sink.finish()?;
    checkpoint::save(&knobs.out, &Model::Psfcn(net), knobs.seed, knobs.epochs, Some(&state))?;
    println!("saved {}", knobs.out.display());
    Ok(())
}

pub fn run_train_lcnet(knobs: &TrainKnobs, heads: HeadMode, lambda_e: f64) -> Result<()> {
    let data = knobs.dataset()?;
    let config = LcnetConfig {
        width_multiplier: knobs.width,
        input_size: data.resolution,
        head_mode: heads,
        ..LcnetConfig::default()
    };
    let net: Lcnet<f32> = Lcnet::build(config, knobs.seed)?;
    let tc = knobs.train_config(lambda_e);
    let mut sink = EpochSink::new(TrainLog::create(knobs.log.as_deref())?);
    let state = train_lcnet(&net, &data, &tc, |s| sink.record(s))?;
    sink.finish()?;
    checkpoint::save(&knobs.out, &Model::Lcnet(net), knobs.seed, knobs.epochs, Some(&state))?;
    println!("saved {}", knobs.out.display());
    Ok(())
}
