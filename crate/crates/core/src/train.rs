//! Procedural datasets and the training loops for both networks.
//!
//! Scenes are synthesized on the fly: spheres, smooth random height
//! fields, and tilted planes, shaded with Lambertian, Blinn-Phong, or
//! per-pixel blended reflectance. Each scene carries a fixed rig of
//! random directional lights; every epoch draws a fresh subset of the
//! rig, renders the observations, and runs them through the
//! augmentation pipeline (intensity division, random resize, random
//! crop) before the gradient step. All randomness is derived from the
//! config seed, so a given config and dataset produce bitwise identical
//! parameters run over run.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{arg_err, degenerate_err, Result};
use crate::grid::INTENSITY_RANGE;
use crate::lcnet::{lighting_loss, Lcnet};
use crate::metrics::{angular_error_degrees, scale_invariant_intensity_error};
use crate::optim::{adam_step, lr_at_epoch, AdamState};
use crate::psfcn::{InputMode, Psfcn};
use crate::render::{
    heightfield_normal_map, make_material_map, render_sample, sample_lights, sphere_normal_map,
    Albedo, Brdf, DirectionalLight, MaterialMapKind, NormalMap, PlaneHeight, RenderOptions,
    WavyHeight,
};
use crate::rng::{rng_from_seed, subrng, subseed, Rng};
use crate::tensor::{affine, cosine_loss, Scalar, Tensor};
use crate::vec3::norm;

/// Networks train on 32x32 crops.
pub const CROP_SIZE: usize = 32;

// Seed tag ranges so dataset generation, batch order, per-example
// augmentation, and evaluation never share an RNG stream.
const TAG_SCENE: u64 = 1 << 32;
const TAG_RIG: u64 = 2 << 32;
const TAG_SHUFFLE: u64 = 1 << 40;
const TAG_EXAMPLE: u64 = 2 << 40;
const TAG_EVAL: u64 = 3 << 40;
/// Stride separating epochs inside the `TAG_EXAMPLE` range.
const EXAMPLE_STRIDE: u64 = 1 << 20;

/// One synthetic scene: geometry, reflectance, and its light rig.
pub struct SceneSample {
    pub map: NormalMap,
    pub brdf: Brdf,
    pub lights: Vec<DirectionalLight>,
    /// Held out from training and used for validation.
    pub holdout: bool,
}

/// A collection of scenes rendered at one resolution.
pub struct Dataset {
    pub samples: Vec<SceneSample>,
    pub resolution: usize,
}

impl Dataset {
    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| !self.samples[i].holdout).collect()
    }

    pub fn holdout_indices(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].holdout).collect()
    }
}

/// Which family of scenes to synthesize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "kebab-case")
)]
pub enum SceneMix {
    /// Rotating mix: Lambertian spheres, Blinn-Phong spheres, and
    /// Lambertian wavy height fields.
    General,
    /// Spheres whose reflectance blends a Lambertian and a Blinn-Phong
    /// lobe in a checker pattern.
    BlendedSpheres,
    /// Tilted planes: constant-normal scenes whose shading carries
    /// almost no directional information.
    Planar,
}

/// Everything that defines a synthetic dataset. Serializes as the
/// scene-config file consumed by the command line.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default)
)]
pub struct DatasetSpec {
    pub mix: SceneMix,
    pub count: usize,
    pub resolution: usize,
    /// Size of each scene's light rig.
    pub lights_per_sample: usize,
    /// Azimuth span of the rig, centered on 90 degrees.
    pub azimuth_span_deg: f64,
    /// Elevation span of the rig, centered on the horizon.
    pub elevation_span_deg: f64,
    pub intensity_range: (f64, f64),
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            mix: SceneMix::General,
            count: 200,
            resolution: 128,
            lights_per_sample: 64,
            azimuth_span_deg: 180.0,
            elevation_span_deg: 180.0,
            intensity_range: (0.2, 2.0),
            seed: 7,
        }
    }
}

/// Synthesizes the scenes described by `spec`. Every 100th sample
/// (index 99, 199, ...) is marked as held out, a 99:1 split.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(arg_err("generate_dataset", "count must be at least 1"));
    }
    let (mix, resolution, seed) = (spec.mix, spec.resolution, spec.seed);
    let mut samples = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = subrng(seed, TAG_SCENE + i as u64);
        let (map, brdf) = match mix {
            SceneMix::General => match i % 3 {
                0 => (
                    sphere_normal_map(resolution)?,
                    Brdf::Lambertian { albedo: Albedo::Constant(rng.gen_range(0.3..0.95)) },
                ),
                1 => (
                    sphere_normal_map(resolution)?,
                    Brdf::BlinnPhong {
                        k_d: rng.gen_range(0.3..0.8),
                        k_s: rng.gen_range(0.2..0.5),
                        shininess: rng.gen_range(8.0..64.0),
                    },
                ),
                _ => {
                    let surface = WavyHeight::random(rng.gen(), 4, 0.12);
                    (
                        heightfield_normal_map(&surface, resolution)?,
                        Brdf::Lambertian { albedo: Albedo::Constant(rng.gen_range(0.3..0.95)) },
                    )
                }
            },
            SceneMix::BlendedSpheres => {
                let map = sphere_normal_map(resolution)?;
                let a = Brdf::Lambertian { albedo: Albedo::Constant(rng.gen_range(0.4..0.95)) };
                let b = Brdf::BlinnPhong {
                    k_d: rng.gen_range(0.2..0.5),
                    k_s: rng.gen_range(0.3..0.6),
                    shininess: rng.gen_range(16.0..64.0),
                };
                let weights =
                    make_material_map(MaterialMapKind::Checker, resolution, resolution, rng.gen());
                (map, Brdf::Blend { a: Box::new(a), b: Box::new(b), weights })
            }
            SceneMix::Planar => {
                let surface = PlaneHeight {
                    sx: rng.gen_range(-0.3..0.3),
                    sy: rng.gen_range(-0.3..0.3),
                    offset: 0.2,
                };
                (
                    heightfield_normal_map(&surface, resolution)?,
                    Brdf::Lambertian { albedo: Albedo::Constant(rng.gen_range(0.4..0.9)) },
                )
            }
        };
        let lights = sample_lights(
            spec.lights_per_sample,
            spec.azimuth_span_deg,
            spec.elevation_span_deg,
            spec.intensity_range,
            subseed(seed, TAG_RIG + i as u64),
        )?;
        samples.push(SceneSample { map, brdf, lights, holdout: i % 100 == 99 });
    }
    Ok(Dataset { samples, resolution })
}

/// Where the normal estimation network gets its per-image lights from.
#[derive(Clone, Copy)]
pub enum PsfcnLightSource<'a, T: Scalar> {
    /// Use the ground-truth rig (calibrated setting).
    GroundTruth,
    /// Estimate direction and intensity with a lighting network first
    /// (uncalibrated setting). The lighting network is frozen: no
    /// gradient reaches it.
    Estimated(&'a Lcnet<T>),
}

/// Hyperparameters shared by both training loops.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Observations drawn from each scene's rig per epoch.
    pub q_per_sample: usize,
    /// Half-width of the additive uniform render noise.
    pub noise_amplitude: f64,
    pub seed: u64,
    /// Run held-out validation after every epoch.
    pub eval_per_epoch: bool,
    /// Observations per scene during validation.
    pub eval_q: usize,
    /// Weight of the intensity term in the lighting loss (ignored by
    /// the normal estimation loop).
    pub intensity_loss_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            initial_lr: 1e-3,
            q_per_sample: 16,
            noise_amplitude: 0.025,
            seed: 7,
            eval_per_epoch: true,
            eval_q: 16,
            intensity_loss_weight: 1.0,
        }
    }
}

/// Per-epoch summary passed to the progress callback.
#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    /// Normal MAE (normal estimation) or light direction MAE (lighting
    /// estimation) on the held-out scenes, when validation ran.
    pub val_mae_degrees: Option<f64>,
    /// Scale-invariant intensity error on held-out scenes (lighting
    /// estimation only).
    pub val_intensity_re: Option<f64>,
}

/// Which part of a dataset an evaluation runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSet {
    Holdout,
    All,
}

/// A rendered and augmented observation set for the normal estimation
/// network, paired with its target.
struct PsfcnExample<T: Scalar> {
    images: Vec<Tensor<T>>,
    lights: Vec<DirectionalLight>,
    normals: Tensor<T>,
    mask: Vec<bool>,
}

/// A rendered observation set for the lighting network: images scaled
/// by a random per-image factor, with that factor folded into the
/// target intensities.
struct LcnetExample<T: Scalar> {
    images: Vec<Tensor<T>>,
    mask: Tensor<T>,
    targets: Vec<DirectionalLight>,
}

fn draw_lights(
    rng: &mut Rng,
    lights: &[DirectionalLight],
    q: usize,
) -> Result<Vec<DirectionalLight>> {
    if q == 0 || q > lights.len() {
        return Err(arg_err(
            "draw_lights",
            alloc::format!("cannot draw {q} of {} lights", lights.len()),
        ));
    }
    let indices: Vec<usize> = (0..lights.len()).collect();
    Ok(indices.choose_multiple(rng, q).map(|&i| lights[i]).collect())
}

fn mask_tensor<T: Scalar>(map: &NormalMap) -> Result<Tensor<T>> {
    let values = map
        .mask
        .iter()
        .map(|&m| if m { T::from_f64(1.0) } else { T::from_f64(0.0) })
        .collect();
    Tensor::new(&[1, map.height, map.width], values)
}

/// Source coordinate for an output pixel under uniform resampling
/// (pixel centers at half-integers).
fn src_coord(dst: usize, scale: f64) -> f64 {
    (dst as f64 + 0.5) * scale - 0.5
}

/// Bilinear resampling of a channel-major `[C,H,W]` buffer.
fn resize_bilinear(
    values: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    nh: usize,
    nw: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; channels * nh * nw];
    let sy = h as f64 / nh as f64;
    let sx = w as f64 / nw as f64;
    for r in 0..nh {
        let fy = src_coord(r, sy).clamp(0.0, (h - 1) as f64);
        let y0 = fy as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for c in 0..nw {
            let fx = src_coord(c, sx).clamp(0.0, (w - 1) as f64);
            let x0 = fx as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..channels {
                let base = ch * h * w;
                let v00 = values[base + y0 * w + x0];
                let v01 = values[base + y0 * w + x1];
                let v10 = values[base + y1 * w + x0];
                let v11 = values[base + y1 * w + x1];
                let top = v00 + (v01 - v00) * wx;
                let bottom = v10 + (v11 - v10) * wx;
                out[ch * nh * nw + r * nw + c] = top + (bottom - top) * wy;
            }
        }
    }
    out
}

/// Nearest source pixel index for every output pixel.
fn nearest_indices(h: usize, w: usize, nh: usize, nw: usize) -> Vec<usize> {
    let sy = h as f64 / nh as f64;
    let sx = w as f64 / nw as f64;
    let mut out = Vec::with_capacity(nh * nw);
    for r in 0..nh {
        let y = (((r as f64 + 0.5) * sy) as usize).min(h - 1);
        for c in 0..nw {
            let x = (((c as f64 + 0.5) * sx) as usize).min(w - 1);
            out.push(y * w + x);
        }
    }
    out
}

/// Resizes a normal map: the mask by nearest neighbor, the normals
/// bilinearly followed by renormalization. Where interpolation cancels
/// to (near) zero the nearest source normal is used instead.
fn resize_normal_map(map: &NormalMap, nh: usize, nw: usize) -> Result<NormalMap> {
    let near = nearest_indices(map.height, map.width, nh, nw);
    let mask: Vec<bool> = near.iter().map(|&i| map.mask[i]).collect();
    let smooth = resize_bilinear(&map.normals, 3, map.height, map.width, nh, nw);
    let hw = nh * nw;
    let shw = map.height * map.width;
    let mut normals = vec![0.0; 3 * hw];
    for p in 0..hw {
        if !mask[p] {
            continue;
        }
        let v = [smooth[p], smooth[hw + p], smooth[2 * hw + p]];
        let n = norm(v);
        if n > 1e-9 {
            normals[p] = v[0] / n;
            normals[hw + p] = v[1] / n;
            normals[2 * hw + p] = v[2] / n;
        } else {
            let s = near[p];
            normals[p] = map.normals[s];
            normals[hw + p] = map.normals[shw + s];
            normals[2 * hw + p] = map.normals[2 * shw + s];
        }
    }
    NormalMap::from_parts(nh, nw, normals, mask)
}

/// Copies a `size`x`size` window out of a channel-major buffer.
fn crop_window<V: Copy>(
    values: &[V],
    channels: usize,
    h: usize,
    w: usize,
    r0: usize,
    c0: usize,
    size: usize,
) -> Vec<V> {
    let mut out = Vec::with_capacity(channels * size * size);
    for ch in 0..channels {
        let base = ch * h * w;
        for r in 0..size {
            let row = base + (r0 + r) * w + c0;
            out.extend_from_slice(&values[row..row + size]);
        }
    }
    out
}

fn window_foreground(mask: &[bool], w: usize, r0: usize, c0: usize, size: usize) -> usize {
    let mut n = 0;
    for r in r0..r0 + size {
        for c in c0..c0 + size {
            if mask[r * w + c] {
                n += 1;
            }
        }
    }
    n
}

/// Picks a crop origin: up to 16 random windows, accepting the first
/// with at least 10% foreground, otherwise the best seen; a centered
/// window if every candidate was empty.
fn pick_crop(rng: &mut Rng, mask: &[bool], h: usize, w: usize, size: usize) -> (usize, usize) {
    let needed = size * size / 10 + 1;
    let mut best = (0usize, h.saturating_sub(size) / 2, w.saturating_sub(size) / 2);
    for _ in 0..16 {
        let r0 = rng.gen_range(0..=(h - size));
        let c0 = rng.gen_range(0..=(w - size));
        let fg = window_foreground(mask, w, r0, c0, size);
        if fg >= needed {
            return (r0, c0);
        }
        if fg > best.0 {
            best = (fg, r0, c0);
        }
    }
    (best.1, best.2)
}

/// Renders one training (or evaluation) example for the normal
/// estimation network: draw `q` rig lights, render with noise, divide
/// each observation by its light intensity (ground truth or estimated),
/// then optionally resize to a random side in `[32, resolution]` and
/// cut a random 32x32 crop.
fn prepare_psfcn_example<T: Scalar>(
    sample: &SceneSample,
    q: usize,
    source: &PsfcnLightSource<'_, T>,
    noise_amplitude: f64,
    augment: bool,
    seed: u64,
) -> Result<PsfcnExample<T>> {
    let mut rng = rng_from_seed(seed);
    let drawn = draw_lights(&mut rng, &sample.lights, q)?;
    let noise_seed = rng.gen::<u64>();
    let opts = RenderOptions { noise_amplitude, noise_seed, ..RenderOptions::default() };
    let rendered = render_sample::<T>(&sample.map, &sample.brdf, &drawn, &opts)?;

    let lights = match source {
        PsfcnLightSource::GroundTruth => drawn,
        PsfcnLightSource::Estimated(lighting_net) => {
            let mask = mask_tensor::<T>(&sample.map)?;
            lighting_net.estimate_lights(&rendered.images, &mask)?
        }
    };

    // Undo the (known or estimated) light strength so the network sees
    // images on a comparable scale.
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(q);
    for (img, light) in rendered.images.iter().zip(&lights) {
        let inv = 1.0 / light.intensity;
        planes.push(img.to_vec().into_iter().map(|v| v.to_f64() * inv).collect());
    }

    let (h, w) = (sample.map.height, sample.map.width);
    let (planes, map_out) = if augment {
        let hi = h.max(w).max(CROP_SIZE);
        let nh = rng.gen_range(CROP_SIZE..=hi);
        let nw = rng.gen_range(CROP_SIZE..=hi);
        let resized: Vec<Vec<f64>> =
            planes.iter().map(|p| resize_bilinear(p, 3, h, w, nh, nw)).collect();
        let rmap = resize_normal_map(&sample.map, nh, nw)?;
        let (r0, c0) = pick_crop(&mut rng, &rmap.mask, nh, nw, CROP_SIZE);
        let cropped: Vec<Vec<f64>> = resized
            .iter()
            .map(|p| crop_window(p, 3, nh, nw, r0, c0, CROP_SIZE))
            .collect();
        let normals = crop_window(&rmap.normals, 3, nh, nw, r0, c0, CROP_SIZE);
        let mask = crop_window(&rmap.mask, 1, nh, nw, r0, c0, CROP_SIZE);
        (cropped, NormalMap::from_parts(CROP_SIZE, CROP_SIZE, normals, mask)?)
    } else {
        (planes, sample.map.clone())
    };

    let (oh, ow) = (map_out.height, map_out.width);
    let images = planes
        .into_iter()
        .map(|p| Tensor::new(&[3, oh, ow], p.into_iter().map(T::from_f64).collect()))
        .collect::<Result<Vec<_>>>()?;
    let normals = map_out.to_tensor::<T>();
    Ok(PsfcnExample { images, lights, normals, mask: map_out.mask })
}

/// Renders one example for the lighting network: draw `q` rig lights,
/// render with noise, then multiply each image by a random factor from
/// `scale_range`, folding the factor into the target intensity.
fn prepare_lcnet_example<T: Scalar>(
    sample: &SceneSample,
    q: usize,
    noise_amplitude: f64,
    scale_range: (f64, f64),
    seed: u64,
) -> Result<LcnetExample<T>> {
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(arg_err("prepare_lcnet_example", "scale range must be positive and ordered"));
    }
    let mut rng = rng_from_seed(seed);
    let drawn = draw_lights(&mut rng, &sample.lights, q)?;
    let noise_seed = rng.gen::<u64>();
    let opts = RenderOptions { noise_amplitude, noise_seed, ..RenderOptions::default() };
    let rendered = render_sample::<T>(&sample.map, &sample.brdf, &drawn, &opts)?;

    let mut images = Vec::with_capacity(q);
    let mut targets = Vec::with_capacity(q);
    for (img, light) in rendered.images.iter().zip(&drawn) {
        let s = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let scaled: Vec<T> =
            img.to_vec().into_iter().map(|v| T::from_f64(v.to_f64() * s)).collect();
        images.push(Tensor::new(img.shape(), scaled)?);
        targets.push(DirectionalLight::new(light.direction, light.intensity * s)?);
    }
    Ok(LcnetExample { images, mask: mask_tensor(&sample.map)?, targets })
}

fn example_seed(base: u64, epoch: usize, index: usize) -> u64 {
    subseed(base, TAG_EXAMPLE + epoch as u64 * EXAMPLE_STRIDE + index as u64)
}

/// Trains the normal estimation network with Adam, drawing a fresh set
/// of observations per scene every epoch. Returns the final optimizer
/// state so callers can checkpoint it alongside the parameters.
pub fn train_psfcn<T: Scalar>(
    net: &Psfcn<T>,
    data: &Dataset,
    source: PsfcnLightSource<'_, T>,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<AdamState<T>> {
    if tc.batch_size == 0 {
        return Err(arg_err("train_psfcn", "batch size must be at least 1"));
    }
    if net.config.input_mode == InputMode::Normalized && net.config.train_q != tc.q_per_sample {
        return Err(arg_err(
            "train_psfcn",
            "normalized mode expects q_per_sample to match the network's training count",
        ));
    }
    if let PsfcnLightSource::Estimated(lighting_net) = &source {
        if lighting_net.config.input_size != data.resolution {
            return Err(arg_err(
                "train_psfcn",
                "lighting network input size must match the dataset resolution",
            ));
        }
    }
    let train_idx = data.train_indices();
    if train_idx.is_empty() {
        return Err(arg_err("train_psfcn", "dataset has no training samples"));
    }

    let params: Vec<Tensor<T>> = net.params().into_iter().map(|(_, t)| t).collect();
    let mut state = AdamState::new(&params);

    for epoch in 0..tc.epochs {
        let lr = lr_at_epoch(tc.initial_lr, epoch);
        let mut order = train_idx.clone();
        order.shuffle(&mut subrng(tc.seed, TAG_SHUFFLE + epoch as u64));

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks(tc.batch_size) {
            for p in &params {
                p.zero_grad();
            }
            for &idx in batch {
                let ex = prepare_psfcn_example(
                    &data.samples[idx],
                    tc.q_per_sample,
                    &source,
                    tc.noise_amplitude,
                    true,
                    example_seed(tc.seed, epoch, idx),
                )?;
                let light_arg = if net.config.input_mode == InputMode::ImagesOnly {
                    None
                } else {
                    Some(&ex.lights[..])
                };
                let pred = net.forward(&ex.images, light_arg)?;
                let loss = cosine_loss(&pred, &ex.normals, &ex.mask)?;
                affine(&loss, T::from_f64(1.0 / batch.len() as f64), T::from_f64(0.0))
                    .backward()?;
                loss_sum += loss.item()?.to_f64();
                loss_count += 1;
            }
            adam_step(&params, &mut state, T::from_f64(lr))?;
        }

        let val = if tc.eval_per_epoch && !data.holdout_indices().is_empty() {
            Some(psfcn_eval_mae(net, data, tc.eval_q, source, tc.seed, EvalSet::Holdout)?)
        } else {
            None
        };
        on_epoch(&EpochStats {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / loss_count.max(1) as f64,
            val_mae_degrees: val,
            val_intensity_re: None,
        });
    }
    Ok(state)
}

/// Mean angular error of predicted normals in degrees over masked
/// pixels of the selected scenes. Observations are rendered without
/// noise or augmentation at the dataset resolution.
pub fn psfcn_eval_mae<T: Scalar>(
    net: &Psfcn<T>,
    data: &Dataset,
    q: usize,
    source: PsfcnLightSource<'_, T>,
    seed: u64,
    set: EvalSet,
) -> Result<f64> {
    let mut err_sum = 0.0;
    let mut count = 0usize;
    for (idx, sample) in data.samples.iter().enumerate() {
        if set == EvalSet::Holdout && !sample.holdout {
            continue;
        }
        let ex = prepare_psfcn_example(
            sample,
            q,
            &source,
            0.0,
            false,
            subseed(seed, TAG_EVAL + idx as u64),
        )?;
        let light_arg = if net.config.input_mode == InputMode::ImagesOnly {
            None
        } else {
            Some(&ex.lights[..])
        };
        let pred = net.forward(&ex.images, light_arg)?;
        let pv = pred.to_vec();
        let gv = ex.normals.to_vec();
        let hw = sample.map.pixels();
        for p in 0..hw {
            if !ex.mask[p] {
                continue;
            }
            let pr = [pv[p].to_f64(), pv[hw + p].to_f64(), pv[2 * hw + p].to_f64()];
            let gt = [gv[p].to_f64(), gv[hw + p].to_f64(), gv[2 * hw + p].to_f64()];
            // A vanishing prediction carries no direction; count it as
            // orthogonal rather than letting it score as a perfect hit.
            err_sum += if norm(pr) > 1e-12 { angular_error_degrees(pr, gt) } else { 90.0 };
            count += 1;
        }
    }
    if count == 0 {
        return Err(degenerate_err("psfcn_eval_mae", "no masked pixels in the selected set"));
    }
    Ok(err_sum / count as f64)
}

/// Trains the lighting estimation network with Adam. Returns the final
/// optimizer state.
pub fn train_lcnet<T: Scalar>(
    net: &Lcnet<T>,
    data: &Dataset,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<AdamState<T>> {
    if tc.batch_size == 0 {
        return Err(arg_err("train_lcnet", "batch size must be at least 1"));
    }
    if net.config.input_size != data.resolution {
        return Err(arg_err(
            "train_lcnet",
            "network input size must match the dataset resolution",
        ));
    }
    let train_idx = data.train_indices();
    if train_idx.is_empty() {
        return Err(arg_err("train_lcnet", "dataset has no training samples"));
    }

    let params: Vec<Tensor<T>> = net.params().into_iter().map(|(_, t)| t).collect();
    let mut state = AdamState::new(&params);

    for epoch in 0..tc.epochs {
        let lr = lr_at_epoch(tc.initial_lr, epoch);
        let mut order = train_idx.clone();
        order.shuffle(&mut subrng(tc.seed, TAG_SHUFFLE + epoch as u64));

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks(tc.batch_size) {
            for p in &params {
                p.zero_grad();
            }
            for &idx in batch {
                let ex = prepare_lcnet_example(
                    &data.samples[idx],
                    tc.q_per_sample,
                    tc.noise_amplitude,
                    INTENSITY_RANGE,
                    example_seed(tc.seed, epoch, idx),
                )?;
                let out = net.forward(&ex.images, &ex.mask)?;
                let loss =
                    lighting_loss(&out, &ex.targets, &net.config.grid, tc.intensity_loss_weight)?;
                affine(&loss, T::from_f64(1.0 / batch.len() as f64), T::from_f64(0.0))
                    .backward()?;
                loss_sum += loss.item()?.to_f64();
                loss_count += 1;
            }
            adam_step(&params, &mut state, T::from_f64(lr))?;
        }

        let val = if tc.eval_per_epoch && !data.holdout_indices().is_empty() {
            Some(lcnet_eval_metrics(net, data, tc.eval_q, tc.seed, EvalSet::Holdout)?)
        } else {
            None
        };
        on_epoch(&EpochStats {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / loss_count.max(1) as f64,
            val_mae_degrees: val.as_ref().map(|v| v.direction_mae_degrees),
            val_intensity_re: val.as_ref().map(|v| v.intensity_relative_error),
        });
    }
    Ok(state)
}

/// Held-out quality of a lighting network.
#[derive(Clone, Copy, Debug)]
pub struct LightingEval {
    /// Mean angular error of estimated directions, degrees.
    pub direction_mae_degrees: f64,
    /// Scale-invariant relative intensity error, fitted per scene.
    pub intensity_relative_error: f64,
}

/// Evaluates light estimation on the selected scenes: noise-free
/// renders, random per-image intensity scales, directions scored by
/// angular error and intensities by the scale-invariant relative error.
pub fn lcnet_eval_metrics<T: Scalar>(
    net: &Lcnet<T>,
    data: &Dataset,
    q: usize,
    seed: u64,
    set: EvalSet,
) -> Result<LightingEval> {
    let mut dir_sum = 0.0;
    let mut dir_count = 0usize;
    let mut re_sum = 0.0;
    let mut re_count = 0usize;
    for (idx, sample) in data.samples.iter().enumerate() {
        if set == EvalSet::Holdout && !sample.holdout {
            continue;
        }
        let ex = prepare_lcnet_example::<T>(
            sample,
            q,
            0.0,
            INTENSITY_RANGE,
            subseed(seed, TAG_EVAL + idx as u64),
        )?;
        let estimates = net.estimate_lights(&ex.images, &ex.mask)?;
        for (est, target) in estimates.iter().zip(&ex.targets) {
            dir_sum += angular_error_degrees(est.direction, target.direction);
            dir_count += 1;
        }
        let est_e: Vec<f64> = estimates.iter().map(|l| l.intensity).collect();
        let ref_e: Vec<f64> = ex.targets.iter().map(|l| l.intensity).collect();
        let (_, re) = scale_invariant_intensity_error(&est_e, &ref_e)?;
        re_sum += re;
        re_count += 1;
    }
    if dir_count == 0 {
        return Err(degenerate_err("lcnet_eval_metrics", "no scenes in the selected set"));
    }
    Ok(LightingEval {
        direction_mae_degrees: dir_sum / dir_count as f64,
        intensity_relative_error: re_sum / re_count.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcnet::{HeadMode, LcnetConfig};
    use crate::psfcn::PsfcnConfig;

    fn tiny_dataset(count: usize, resolution: usize, rig: usize, e: (f64, f64)) -> Dataset {
        generate_dataset(&DatasetSpec {
            mix: SceneMix::General,
            count,
            resolution,
            lights_per_sample: rig,
            intensity_range: e,
            seed: 21,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    fn tiny_psfcn(mode: InputMode, train_q: usize) -> Psfcn<f32> {
        let config =
            PsfcnConfig { width_multiplier: 1.0 / 16.0, input_mode: mode, train_q };
        Psfcn::build(config, 3).unwrap()
    }

    fn tiny_lcnet(input_size: usize, head_mode: HeadMode) -> Lcnet<f32> {
        let config = LcnetConfig {
            width_multiplier: 1.0 / 16.0,
            input_size,
            head_mode,
            ..LcnetConfig::default()
        };
        Lcnet::build(config, 5).unwrap()
    }

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 3,
            initial_lr: 1e-3,
            q_per_sample: 2,
            noise_amplitude: 0.01,
            seed: 11,
            eval_per_epoch: false,
            eval_q: 2,
            intensity_loss_weight: 1.0,
        }
    }

    #[test]
    fn dataset_generation_is_deterministic_with_99_to_1_split() {
        let spec = DatasetSpec {
            count: 100,
            resolution: 16,
            lights_per_sample: 4,
            seed: 5,
            ..DatasetSpec::default()
        };
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.samples.len(), 100);
        assert_eq!(a.holdout_indices(), vec![99]);
        assert_eq!(a.train_indices().len(), 99);
        for i in [0, 1, 2, 57, 99] {
            assert_eq!(a.samples[i].map.normals, b.samples[i].map.normals);
            for (la, lb) in a.samples[i].lights.iter().zip(&b.samples[i].lights) {
                assert_eq!(la.direction, lb.direction);
                assert_eq!(la.intensity, lb.intensity);
            }
        }
        // the mix rotates: two sphere materials, then a height field
        assert!(matches!(a.samples[0].brdf, Brdf::Lambertian { .. }));
        assert!(matches!(a.samples[1].brdf, Brdf::BlinnPhong { .. }));
        assert!(matches!(a.samples[2].brdf, Brdf::Lambertian { .. }));
        // height fields cover the full frame, spheres do not
        assert_eq!(a.samples[2].map.foreground_count(), 16 * 16);
        assert!(a.samples[0].map.foreground_count() < 16 * 16);
        // rig intensities honor the requested range
        for s in &a.samples {
            assert_eq!(s.lights.len(), 4);
            for l in &s.lights {
                assert!(l.intensity >= 0.2 && l.intensity < 2.0);
            }
        }
    }

    #[test]
    fn blended_and_planar_mixes_have_expected_structure() {
        let blend = generate_dataset(&DatasetSpec {
            mix: SceneMix::BlendedSpheres,
            count: 2,
            resolution: 16,
            lights_per_sample: 4,
            intensity_range: (1.0, 1.0),
            seed: 9,
            ..DatasetSpec::default()
        })
        .unwrap();
        match &blend.samples[0].brdf {
            Brdf::Blend { weights, .. } => {
                assert_eq!(weights.len(), 256);
                assert!(weights.iter().all(|&w| w == 0.0 || w == 1.0));
                assert!(weights.iter().any(|&w| w == 0.0));
                assert!(weights.iter().any(|&w| w == 1.0));
            }
            _ => panic!("expected blended reflectance"),
        }
        for l in &blend.samples[0].lights {
            assert_eq!(l.intensity, 1.0);
        }

        let planar = generate_dataset(&DatasetSpec {
            mix: SceneMix::Planar,
            count: 2,
            resolution: 16,
            lights_per_sample: 4,
            intensity_range: (1.0, 1.0),
            seed: 9,
            ..DatasetSpec::default()
        })
        .unwrap();
        let map = &planar.samples[0].map;
        assert_eq!(map.foreground_count(), 256);
        let first = map.normal_at(0);
        for p in 0..map.pixels() {
            let n = map.normal_at(p);
            for k in 0..3 {
                assert!((n[k] - first[k]).abs() < 1e-12, "planar normals must be constant");
            }
        }
    }

    #[test]
    fn bilinear_resize_preserves_constants_and_mask_coverage() {
        let flat = vec![0.7; 2 * 9 * 13];
        let resized = resize_bilinear(&flat, 2, 9, 13, 17, 5);
        assert_eq!(resized.len(), 2 * 17 * 5);
        for v in resized {
            assert!((v - 0.7).abs() < 1e-12);
        }

        let map = sphere_normal_map(33).unwrap();
        let small = resize_normal_map(&map, 17, 17).unwrap();
        let big_ratio = map.foreground_count() as f64 / map.pixels() as f64;
        let small_ratio = small.foreground_count() as f64 / small.pixels() as f64;
        assert!((big_ratio - small_ratio).abs() < 0.1);
        // from_parts already validated unit length of masked normals;
        // check a masked pixel is a plausible sphere normal.
        let center = small.normal_at(8 * 17 + 8);
        assert!(center[2] > 0.9);
    }

    #[test]
    fn crop_window_extracts_the_right_values() {
        // 2 channels of 3x4, values encode (channel, row, col)
        let mut values = Vec::new();
        for ch in 0..2 {
            for r in 0..3 {
                for c in 0..4 {
                    values.push((100 * ch + 10 * r + c) as f64);
                }
            }
        }
        let crop = crop_window(&values, 2, 3, 4, 1, 2, 2);
        assert_eq!(crop, vec![12.0, 13.0, 22.0, 23.0, 112.0, 113.0, 122.0, 123.0]);
    }

    #[test]
    fn psfcn_example_is_deterministic_and_crop_sized() {
        let data = tiny_dataset(3, 32, 8, (0.2, 2.0));
        let source = PsfcnLightSource::<f32>::GroundTruth;
        let a = prepare_psfcn_example(&data.samples[0], 4, &source, 0.01, true, 77).unwrap();
        let b = prepare_psfcn_example(&data.samples[0], 4, &source, 0.01, true, 77).unwrap();
        assert_eq!(a.images.len(), 4);
        for (ia, ib) in a.images.iter().zip(&b.images) {
            assert_eq!(ia.shape(), &[3, CROP_SIZE, CROP_SIZE]);
            assert_eq!(ia.to_vec(), ib.to_vec());
        }
        assert_eq!(a.normals.to_vec(), b.normals.to_vec());
        assert_eq!(a.mask, b.mask);
        assert!(a.mask.iter().any(|&m| m), "crop should contain foreground");
        // ground-truth source passes rig lights through
        for l in &a.lights {
            assert!(data.samples[0]
                .lights
                .iter()
                .any(|r| r.direction == l.direction && r.intensity == l.intensity));
        }
        // different seed, different example
        let c = prepare_psfcn_example(&data.samples[0], 4, &source, 0.01, true, 78).unwrap();
        assert_ne!(a.images[0].to_vec(), c.images[0].to_vec());
    }

    #[test]
    fn unaugmented_example_keeps_resolution_and_targets() {
        let data = tiny_dataset(3, 32, 8, (0.2, 2.0));
        let source = PsfcnLightSource::<f32>::GroundTruth;
        let ex = prepare_psfcn_example(&data.samples[0], 4, &source, 0.0, false, 77).unwrap();
        assert_eq!(ex.images[0].shape(), &[3, 32, 32]);
        assert_eq!(ex.normals.to_vec(), data.samples[0].map.to_tensor::<f32>().to_vec());
        assert_eq!(ex.mask, data.samples[0].map.mask);
        for img in &ex.images {
            assert!(img.to_vec().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn lcnet_example_folds_image_scale_into_targets() {
        let data = tiny_dataset(2, 32, 8, (1.0, 1.0));
        let base: LcnetExample<f32> =
            prepare_lcnet_example(&data.samples[0], 3, 0.0, (1.0, 1.0), 42).unwrap();
        let varied: LcnetExample<f32> =
            prepare_lcnet_example(&data.samples[0], 3, 0.0, (0.2, 2.0), 42).unwrap();
        for i in 0..3 {
            assert_eq!(base.targets[i].direction, varied.targets[i].direction);
            let s = varied.targets[i].intensity;
            assert!((0.2..2.0).contains(&s));
            assert_eq!(base.targets[i].intensity, 1.0);
            let bv = base.images[i].to_vec();
            let vv = varied.images[i].to_vec();
            for (b, v) in bv.iter().zip(&vv) {
                assert!((*v as f64 - *b as f64 * s).abs() < 1e-6);
            }
        }
        // mask channel mirrors the map mask
        let mv = base.mask.to_vec();
        for (p, &m) in data.samples[0].map.mask.iter().enumerate() {
            assert_eq!(mv[p], if m { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn psfcn_training_reduces_loss() {
        let data = tiny_dataset(6, 32, 8, (0.2, 2.0));
        let net = tiny_psfcn(InputMode::Calibrated, 2);
        let tc = tiny_config(3);
        let mut stats = Vec::new();
        let state =
            train_psfcn(&net, &data, PsfcnLightSource::GroundTruth, &tc, |s| stats.push(s.clone()))
                .unwrap();
        assert_eq!(stats.len(), 3);
        assert_eq!(stats[0].learning_rate, 1e-3);
        assert!(stats[0].mean_loss.is_finite());
        assert!(
            stats[2].mean_loss < stats[0].mean_loss,
            "loss should fall: {} -> {}",
            stats[0].mean_loss,
            stats[2].mean_loss
        );
        // one optimizer step per batch: 6 samples in batches of 3, 3 epochs
        assert_eq!(state.step_count(), 6);
    }

    #[test]
    fn lcnet_training_reduces_loss() {
        let data = tiny_dataset(6, 32, 8, (1.0, 1.0));
        let net = tiny_lcnet(32, HeadMode::Classification);
        let tc = TrainConfig { epochs: 4, ..tiny_config(4) };
        let mut stats = Vec::new();
        train_lcnet(&net, &data, &tc, |s| stats.push(s.clone())).unwrap();
        // untrained classification loss sits near the uniform baseline
        assert!(stats[0].mean_loss > 5.0);
        assert!(
            stats[3].mean_loss < stats[0].mean_loss,
            "loss should fall: {} -> {}",
            stats[0].mean_loss,
            stats[3].mean_loss
        );
    }

    #[test]
    fn psfcn_training_is_bitwise_reproducible() {
        let data = tiny_dataset(4, 32, 8, (0.2, 2.0));
        let tc = tiny_config(1);
        let run = || {
            let net = tiny_psfcn(InputMode::Calibrated, 2);
            train_psfcn(&net, &data, PsfcnLightSource::GroundTruth, &tc, |_| {}).unwrap();
            net.params()
                .into_iter()
                .flat_map(|(_, t)| t.to_vec())
                .map(|v| v.to_bits())
                .collect::<Vec<u32>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn estimated_lights_train_only_the_normal_network() {
        let data = tiny_dataset(4, 32, 8, (0.2, 2.0));
        let lighting = tiny_lcnet(32, HeadMode::Classification);
        let net = tiny_psfcn(InputMode::Calibrated, 2);
        let snapshot = |params: &[(alloc::string::String, Tensor<f32>)]| {
            params.iter().flat_map(|(_, t)| t.to_vec()).map(|v| v.to_bits()).collect::<Vec<u32>>()
        };
        let lighting_before = snapshot(&lighting.params());
        let psfcn_before = snapshot(&net.params());
        let tc = tiny_config(1);
        train_psfcn(&net, &data, PsfcnLightSource::Estimated(&lighting), &tc, |_| {}).unwrap();
        assert_eq!(lighting_before, snapshot(&lighting.params()), "lighting net must stay frozen");
        assert_ne!(psfcn_before, snapshot(&net.params()), "normal net must update");
    }

    #[test]
    fn eval_functions_report_finite_scores() {
        let data = tiny_dataset(4, 32, 8, (1.0, 1.0));
        let net = tiny_psfcn(InputMode::Calibrated, 2);
        let mae =
            psfcn_eval_mae(&net, &data, 2, PsfcnLightSource::GroundTruth, 13, EvalSet::All)
                .unwrap();
        assert!((0.0..=180.0).contains(&mae));
        // holdout set is empty for 4 samples
        assert!(psfcn_eval_mae(&net, &data, 2, PsfcnLightSource::<f32>::GroundTruth, 13, EvalSet::Holdout)
            .is_err());

        let lighting = tiny_lcnet(32, HeadMode::Classification);
        let scores = lcnet_eval_metrics(&lighting, &data, 2, 13, EvalSet::All).unwrap();
        assert!((0.0..=180.0).contains(&scores.direction_mae_degrees));
        assert!(scores.intensity_relative_error.is_finite());
        assert!(scores.intensity_relative_error >= 0.0);

        let regression = tiny_lcnet(32, HeadMode::Regression);
        let scores = lcnet_eval_metrics(&regression, &data, 2, 13, EvalSet::All).unwrap();
        assert!((0.0..=180.0).contains(&scores.direction_mae_degrees));
    }
}
