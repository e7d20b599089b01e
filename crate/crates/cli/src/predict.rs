//! The `predict` and `eval` subcommands.
//!
//! `predict` turns an image stack into a normal map, through either the
//! classic least-squares solver or a checkpointed network. Lights come
//! exclusively from `--lights` (a CSV) or `--lcnet` (a lighting model
//! applied to the stack); nothing is discovered implicitly, so a
//! calibrated model without either flag is a usage error even when the
//! stack directory happens to contain a lights file. `eval` compares
//! normal maps (and optionally lighting rigs) and emits a JSON report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use photostereo_core::classic::l2_solve;
use photostereo_core::metrics::{
    angular_error_degrees, mean_direction_error_degrees, scale_invariant_intensity_error,
};
use photostereo_core::psfcn::{InputMode, Psfcn};
use photostereo_core::render::DirectionalLight;
use photostereo_core::Tensor;

use crate::checkpoint::{self, Model};
use crate::dataset::read_image_stack;
use crate::exit::usage;
use crate::lights::read_lights;
use crate::pfm::{read_pfm, write_pfm, PfmImage};
use crate::report::EvalReport;

pub struct PredictInputs {
    pub images: PathBuf,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub baseline: Option<String>,
    pub lights: Option<PathBuf>,
    pub lcnet: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

fn mask_from_image(img: &PfmImage) -> Result<Vec<bool>> {
    if img.channels != 1 {
        bail!("mask must be 1-channel, got {}", img.channels);
    }
    Ok(img.data.iter().map(|&v| v > 0.5).collect())
}

fn stack_tensors(images: &[PfmImage]) -> Vec<Tensor<f32>> {
    images
        .iter()
        .map(|img| {
            Tensor::new(&[3, img.height, img.width], img.data.clone())
                .expect("stack images are validated 3-channel")
        })
        .collect()
}

fn divide_by_intensity(stack: &[Tensor<f32>], lights: &[DirectionalLight]) -> Vec<Tensor<f32>> {
    stack
        .iter()
        .zip(lights)
        .map(|(img, light)| {
            let inv = (1.0 / light.intensity) as f32;
            let shape = img.shape().to_vec();
            let values: Vec<f32> = img.to_vec().into_iter().map(|v| v * inv).collect();
            Tensor::new(&shape, values).expect("same shape")
        })
        .collect()
}

fn mask_tensor(mask: &[bool], height: usize, width: usize) -> Result<Tensor<f32>> {
    let values = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Ok(Tensor::new(&[1, height, width], values)?)
}

/// Estimated or file-provided lights for a stack, or None when neither
/// flag was given.
fn resolve_lights(
    inputs: &PredictInputs,
    stack: &[Tensor<f32>],
    mask: &[bool],
    height: usize,
    width: usize,
) -> Result<Option<Vec<DirectionalLight>>> {
    match (&inputs.lights, &inputs.lcnet) {
        (Some(_), Some(_)) => {
            Err(usage("--lights and --lcnet are mutually exclusive; pass one"))
        }
        (Some(path), None) => {
            let lights = read_lights(path)?;
            if lights.len() != stack.len() {
                bail!("{} lights for {} images", lights.len(), stack.len());
            }
            Ok(Some(lights))
        }
        (None, Some(path)) => {
            let ck = checkpoint::load(path)?;
            let net = match ck.model {
                Model::Lcnet(net) => net,
                Model::Psfcn(_) => bail!(
                    "{} holds a normal estimation model; --lcnet needs a lighting model",
                    path.display()
                ),
            };
            if height != net.config.input_size || width != net.config.input_size {
                bail!(
                    "lighting model expects {0}x{0} inputs but the stack is {1}x{2}",
                    net.config.input_size,
                    height,
                    width
                );
            }
            let mask_t = mask_tensor(mask, height, width)?;
            Ok(Some(net.estimate_lights(stack, &mask_t)?))
        }
        (None, None) => Ok(None),
    }
}

fn write_normal_map(
    path: &Path,
    normals: &Tensor<f32>,
    mask: &[bool],
    height: usize,
    width: usize,
) -> Result<()> {
    let hw = height * width;
    let values = normals.to_vec();
    let mut data = vec![0.0f32; 3 * hw];
    for p in 0..hw {
        if mask[p] {
            for c in 0..3 {
                data[c * hw + p] = values[c * hw + p];
            }
        }
    }
    write_pfm(path, &PfmImage { height, width, channels: 3, data })
}

pub fn run_predict(inputs: &PredictInputs) -> Result<()> {
    match (&inputs.checkpoint, &inputs.baseline) {
        (Some(_), Some(_)) => {
            return Err(usage("--checkpoint and --baseline are mutually exclusive"));
        }
        (None, None) => {
            return Err(usage("predict needs --checkpoint or --baseline l2"));
        }
        (None, Some(name)) if name != "l2" => {
            return Err(usage(format!("unknown baseline {name:?}; the only baseline is l2")));
        }
        _ => {}
    }

    let images = read_image_stack(&inputs.images)?;
    let (height, width) = (images[0].height, images[0].width);
    let stack = stack_tensors(&images);

    let mask = match &inputs.mask {
        Some(path) => mask_from_image(&read_pfm(path)?)?,
        None => {
            let default_path = inputs.images.join("mask.pfm");
            if default_path.exists() {
                mask_from_image(&read_pfm(&default_path)?)?
            } else {
                vec![true; height * width]
            }
        }
    };
    if mask.len() != height * width {
        bail!("mask has {} pixels but the images are {}x{}", mask.len(), height, width);
    }

    let lights = resolve_lights(inputs, &stack, &mask, height, width)?;

    if inputs.baseline.is_some() {
        let lights = lights
            .ok_or_else(|| usage("--baseline l2 needs lights; pass --lights or --lcnet"))?;
        let estimate = l2_solve(&stack, &lights, &mask)?;
        let normals = estimate.normals.to_tensor::<f32>();
        let out_mask = estimate.normals.mask.clone();
        return write_normal_map(&inputs.out, &normals, &out_mask, height, width);
    }

    let path = inputs.checkpoint.as_ref().expect("checked above");
    let ck = checkpoint::load(path)?;
    let net: Psfcn<f32> = match ck.model {
        Model::Psfcn(net) => net,
        Model::Lcnet(_) => {
            return Err(usage(format!(
                "{} holds a lighting model; pass it as --lcnet next to --baseline or a \
                 normal estimation checkpoint",
                path.display()
            )));
        }
    };

    let calibrated = net.config.input_mode != InputMode::ImagesOnly;
    if calibrated && lights.is_none() {
        return Err(usage(
            "this model takes light directions; pass --lights FILE or --lcnet CHECKPOINT",
        ));
    }
    // Match the training-time convention: observations are divided by the
    // (known or estimated) intensity whenever lights are available.
    let stack = match &lights {
        Some(l) => divide_by_intensity(&stack, l),
        None => stack,
    };
    let light_arg = if calibrated { lights.as_deref() } else { None };
    let pred = net.forward(&stack, light_arg)?;
    write_normal_map(&inputs.out, &pred, &mask, height, width)
}

pub struct EvalInputs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub mask: Option<PathBuf>,
    pub pred_lights: Option<PathBuf>,
    pub gt_lights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub error_map: Option<PathBuf>,
    pub error_ceiling: f64,
}

fn normal_at(img: &PfmImage, p: usize) -> [f64; 3] {
    let hw = img.pixels();
    [img.data[p] as f64, img.data[hw + p] as f64, img.data[2 * hw + p] as f64]
}

fn unit_or_none(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 1e-12 {
        Some([v[0] / n, v[1] / n, v[2] / n])
    } else {
        None
    }
}

pub fn run_eval(inputs: &EvalInputs) -> Result<()> {
    if inputs.pred_lights.is_some() != inputs.gt_lights.is_some() {
        return Err(usage("--pred-lights and --gt-lights must be given together"));
    }
    if !(inputs.error_ceiling > 0.0) {
        return Err(usage("--error-ceiling must be positive"));
    }

    let pred = read_pfm(&inputs.pred)?;
    let gt = read_pfm(&inputs.gt)?;
    for (name, img) in [("prediction", &pred), ("reference", &gt)] {
        if img.channels != 3 {
            bail!("{name} map must be 3-channel, got {}", img.channels);
        }
    }
    if pred.height != gt.height || pred.width != gt.width {
        bail!(
            "prediction is {}x{} but the reference is {}x{}",
            pred.height,
            pred.width,
            gt.height,
            gt.width
        );
    }
    let hw = gt.pixels();
    let mask = match &inputs.mask {
        Some(path) => {
            let m = mask_from_image(&read_pfm(path)?)?;
            if m.len() != hw {
                bail!("mask has {} pixels but the maps have {hw}", m.len());
            }
            m
        }
        // Without an explicit mask, evaluate wherever the reference has a
        // normal written (the background is all zeros).
        None => (0..hw).map(|p| unit_or_none(normal_at(&gt, p)).is_some()).collect(),
    };

    let mut err_sum = 0.0;
    let mut count = 0usize;
    let mut errors = vec![f64::NAN; hw];
    for p in 0..hw {
        if !mask[p] {
            continue;
        }
        let Some(g) = unit_or_none(normal_at(&gt, p)) else {
            continue;
        };
        // A zero prediction carries no direction; score it as orthogonal.
        let err = match unit_or_none(normal_at(&pred, p)) {
            Some(n) => angular_error_degrees(n, g),
            None => 90.0,
        };
        errors[p] = err;
        err_sum += err;
        count += 1;
    }
    if count == 0 {
        bail!("no pixels to evaluate: the mask and reference normals do not overlap");
    }

    let mut report = EvalReport::empty();
    report.normal_mae_degrees = Some(err_sum / count as f64);
    report.valid_pixel_count = Some(count);

    if let (Some(pl), Some(gl)) = (&inputs.pred_lights, &inputs.gt_lights) {
        let est = read_lights(pl)?;
        let reference = read_lights(gl)?;
        if est.len() != reference.len() {
            bail!("{} estimated lights but {} reference lights", est.len(), reference.len());
        }
        let est_dirs: Vec<[f64; 3]> = est.iter().map(|l| l.direction).collect();
        let ref_dirs: Vec<[f64; 3]> = reference.iter().map(|l| l.direction).collect();
        report.direction_mae_degrees = Some(mean_direction_error_degrees(&est_dirs, &ref_dirs)?);
        let est_e: Vec<f64> = est.iter().map(|l| l.intensity).collect();
        let ref_e: Vec<f64> = reference.iter().map(|l| l.intensity).collect();
        let (s, re) = scale_invariant_intensity_error(&est_e, &ref_e)?;
        report.fitted_scale_s = Some(s);
        report.intensity_re_scale = Some(re);
    }

    if let Some(path) = &inputs.error_map {
        let mut data = vec![0.0f32; 3 * hw];
        for p in 0..hw {
            if errors[p].is_finite() {
                let t = (errors[p] / inputs.error_ceiling).clamp(0.0, 1.0) as f32;
                for c in 0..3 {
                    data[c * hw + p] = t;
                }
            }
        }
        write_pfm(path, &PfmImage { height: gt.height, width: gt.width, channels: 3, data })?;
    }

    println!("{}", report.to_json()?);
    if let Some(path) = &inputs.out {
        report.write(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_predictions_score_orthogonal() {
        let dir = tempfile::tempdir().unwrap();
        let gt_path = dir.path().join("gt.pfm");
        let pred_path = dir.path().join("pred.pfm");
        // 1x2: both reference normals are +z; prediction matches at x=0
        // and is zero at x=1.
        let gt = PfmImage::new(1, 2, 3, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let pred = PfmImage::new(1, 2, 3, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        write_pfm(&gt_path, &gt).unwrap();
        write_pfm(&pred_path, &pred).unwrap();
        let inputs = EvalInputs {
            pred: pred_path,
            gt: gt_path,
            mask: None,
            pred_lights: None,
            gt_lights: None,
            out: Some(dir.path().join("report.json")),
            error_map: None,
            error_ceiling: 45.0,
        };
        run_eval(&inputs).unwrap();
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let report: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report.valid_pixel_count, Some(2));
        assert!((report.normal_mae_degrees.unwrap() - 45.0).abs() < 1e-9);
        assert!(report.direction_mae_degrees.is_none());
    }
}
