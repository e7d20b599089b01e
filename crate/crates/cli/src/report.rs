//! Evaluation reports and per-epoch training logs.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// The eval subcommand's output. Every key is always present; metrics
/// that were not computed (because their inputs were not given) are null.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean angular error of predicted normals over evaluated pixels.
    pub normal_mae_degrees: Option<f64>,
    /// Pixels that entered the normal metric.
    pub valid_pixel_count: Option<usize>,
    /// Mean angular error of predicted light directions.
    pub direction_mae_degrees: Option<f64>,
    /// Scale-invariant relative intensity error of predicted lights.
    pub intensity_re_scale: Option<f64>,
    /// The least-squares scale fitted by the intensity metric.
    pub fitted_scale_s: Option<f64>,
}

impl EvalReport {
    pub fn empty() -> Self {
        EvalReport {
            normal_mae_degrees: None,
            valid_pixel_count: None,
            direction_mae_degrees: None,
            intensity_re_scale: None,
            fitted_scale_s: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// One line of the JSONL training log.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainLogLine {
    pub epoch: usize,
    pub loss: f64,
    /// Held-out normal or direction error, when evaluation ran.
    pub mae_degrees: Option<f64>,
    pub lr: f64,
    /// Seconds spent on this epoch, including its evaluation.
    pub wall_time_s: f64,
}

pub struct TrainLog {
    file: Option<fs::File>,
}

impl TrainLog {
    /// Opens (truncates) the log file; `None` disables logging.
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => Some(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ),
            None => None,
        };
        Ok(TrainLog { file })
    }

    pub fn append(&mut self, line: &TrainLogLine) -> Result<()> {
        if let Some(file) = &mut self.file {
            let json = serde_json::to_string(line)?;
            writeln!(file, "{json}").context("writing the training log")?;
        }
        Ok(())
    }
}
