//! Lighting-estimation network.
//!
//! Each observation (image plus mask channel) runs through a shared
//! stride-2 convolution stack down to a 2x2 feature map, flattened into a
//! local feature. An elementwise max over the local features of all
//! observations gives an order-invariant global feature; each observation
//! then predicts its own light from the concatenation of its local feature
//! and the shared global feature, so estimates are equivariant under
//! observation reordering. The default head classifies azimuth, elevation,
//! and intensity into grid bins; a regression head (unit direction plus
//! softplus intensity) exists for the ablation comparison.

// f64 math through the trait so the crate builds without std
#[allow(unused_imports)]
use num_traits::Float as _;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng as _;

use crate::error::{arg_err, shape_err, Result};
use crate::grid::LightingGrid;
use crate::psfcn::{Layer, LEAKY_SLOPE};
use crate::render::DirectionalLight;
use crate::rng::subrng;
use crate::tensor::{
    abs, add, affine, concat, l2_normalize_rows, leaky_relu, linear, max_fuse, mean, mul,
    reshape, softmax_cross_entropy, softplus, sub, Scalar, Tensor,
};
use crate::vec3::normalize;

/// How the network reports a light.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HeadMode {
    /// Bin logits over azimuth, elevation, and intensity.
    Classification,
    /// A 3-vector direction (L2-normalized) and a softplus intensity.
    Regression,
}

#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LcnetConfig {
    /// Scales every hidden channel count; 1.0 is the full network.
    pub width_multiplier: f64,
    /// Input side length; a power of two in [4, 128]. The conv stack has
    /// log2(input_size) - 1 layers so features always bottom out at 2x2.
    pub input_size: usize,
    pub head_mode: HeadMode,
    pub grid: LightingGrid,
}

impl Default for LcnetConfig {
    fn default() -> Self {
        LcnetConfig {
            width_multiplier: 1.0,
            input_size: 128,
            head_mode: HeadMode::Classification,
            grid: LightingGrid::default(),
        }
    }
}

/// Base output channels of the stride-2 stack at full width; the first
/// `depth` entries are used.
const CONV_PLAN: [usize; 6] = [64, 128, 128, 256, 256, 512];

impl LcnetConfig {
    fn scaled(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier).round() as usize).max(1)
    }

    fn depth(&self) -> Result<usize> {
        let s = self.input_size;
        if !(4..=128).contains(&s) || !s.is_power_of_two() {
            return Err(arg_err(
                "Lcnet",
                format!("input size must be a power of two in [4,128], got {s}"),
            ));
        }
        Ok(s.trailing_zeros() as usize - 1)
    }
}

struct Dense<T: Scalar> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    fn init(in_features: usize, out_features: usize, seed: u64, tag: u64) -> Self {
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let bound = gain * (3.0 / in_features as f64).sqrt();
        let mut rng = subrng(seed, tag);
        let values: Vec<T> = (0..in_features * out_features)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        let weight = Tensor::param(&[out_features, in_features], values).expect("sized");
        let bias = Tensor::param(&[out_features], vec![T::zero(); out_features]).expect("1d");
        Dense { weight, bias }
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        linear(x, &self.weight, &self.bias)
    }

    fn parameter_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

enum Heads<T: Scalar> {
    Classification { azimuth: Dense<T>, elevation: Dense<T>, intensity: Dense<T> },
    Regression { direction: Dense<T>, intensity: Dense<T> },
}

/// Per-observation network outputs, kept as graph tensors so losses can
/// backpropagate. Classification rows are logits; regression directions
/// are unit rows `[1,3]` and intensities positive `[1,1]` values.
pub enum LcnetOutput<T: Scalar> {
    Classification {
        azimuth: Vec<Tensor<T>>,
        elevation: Vec<Tensor<T>>,
        intensity: Vec<Tensor<T>>,
    },
    Regression {
        direction: Vec<Tensor<T>>,
        intensity: Vec<Tensor<T>>,
    },
}

pub struct Lcnet<T: Scalar> {
    pub config: LcnetConfig,
    convs: Vec<Layer<T>>,
    fc: Dense<T>,
    heads: Heads<T>,
}

impl<T: Scalar> Lcnet<T> {
    /// Deterministically initialize all parameters from a seed.
    pub fn build(config: LcnetConfig, seed: u64) -> Result<Self> {
        if !(config.width_multiplier > 0.0) || !config.width_multiplier.is_finite() {
            return Err(arg_err("Lcnet", "width multiplier must be positive"));
        }
        let depth = config.depth()?;
        let mut convs = Vec::with_capacity(depth);
        let mut in_ch = 4;
        for (i, &base) in CONV_PLAN.iter().take(depth).enumerate() {
            let out_ch = config.scaled(base);
            convs.push(Layer::init(in_ch, out_ch, 3, 2, false, seed, i as u64));
            in_ch = out_ch;
        }
        let local_features = in_ch * 4;
        let hidden = config.scaled(512);
        let fc = Dense::init(2 * local_features, hidden, seed, 50);
        let heads = match config.head_mode {
            HeadMode::Classification => Heads::Classification {
                azimuth: Dense::init(hidden, config.grid.direction_bins, seed, 60),
                elevation: Dense::init(hidden, config.grid.direction_bins, seed, 61),
                intensity: Dense::init(hidden, config.grid.intensity_bins, seed, 62),
            },
            HeadMode::Regression => Heads::Regression {
                direction: Dense::init(hidden, 3, seed, 70),
                intensity: Dense::init(hidden, 1, seed, 71),
            },
        };
        Ok(Lcnet { config, convs, fc, heads })
    }

    /// Named parameters in a stable order.
    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.convs.iter().enumerate() {
            out.push((format!("conv.{i}.weight"), layer.weight.clone()));
            out.push((format!("conv.{i}.bias"), layer.bias.clone()));
        }
        let dense = |name: &str, d: &Dense<T>, out: &mut Vec<(String, Tensor<T>)>| {
            out.push((format!("{name}.weight"), d.weight.clone()));
            out.push((format!("{name}.bias"), d.bias.clone()));
        };
        dense("fc", &self.fc, &mut out);
        match &self.heads {
            Heads::Classification { azimuth, elevation, intensity } => {
                dense("head_azimuth", azimuth, &mut out);
                dense("head_elevation", elevation, &mut out);
                dense("head_intensity", intensity, &mut out);
            }
            Heads::Regression { direction, intensity } => {
                dense("head_direction", direction, &mut out);
                dense("head_intensity", intensity, &mut out);
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        let heads = match &self.heads {
            Heads::Classification { azimuth, elevation, intensity } => {
                azimuth.parameter_count()
                    + elevation.parameter_count()
                    + intensity.parameter_count()
            }
            Heads::Regression { direction, intensity } => {
                direction.parameter_count() + intensity.parameter_count()
            }
        };
        self.convs.iter().map(Layer::parameter_count).sum::<usize>()
            + self.fc.parameter_count()
            + heads
    }

    fn check_inputs(&self, images: &[Tensor<T>], mask: &Tensor<T>) -> Result<()> {
        if images.is_empty() {
            return Err(arg_err("Lcnet", "need at least one image"));
        }
        let s = self.config.input_size;
        for img in images {
            if img.shape() != [3, s, s] {
                return Err(shape_err(
                    "Lcnet",
                    format!("images must be [3,{s},{s}], got {:?}", img.shape()),
                ));
            }
        }
        if mask.shape() != [1, s, s] {
            return Err(shape_err(
                "Lcnet",
                format!("mask must be [1,{s},{s}], got {:?}", mask.shape()),
            ));
        }
        Ok(())
    }

    /// Local feature map of one observation: `[C, 2, 2]`.
    fn local_map(&self, image: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = concat(&[image.clone(), mask.clone()], 0)?;
        for layer in &self.convs {
            x = leaky_relu(&layer.apply(&x)?, T::from_f64(LEAKY_SLOPE));
        }
        Ok(x)
    }

    /// Run the network on q observations of one scene.
    pub fn forward(&self, images: &[Tensor<T>], mask: &Tensor<T>) -> Result<LcnetOutput<T>> {
        self.check_inputs(images, mask)?;
        let locals: Vec<Tensor<T>> = images
            .iter()
            .map(|img| self.local_map(img, mask))
            .collect::<Result<_>>()?;
        let global = max_fuse(&locals)?;
        let features = global.numel();
        let global_flat = reshape(&global, &[1, features])?;
        let mut az = Vec::new();
        let mut el = Vec::new();
        let mut dir = Vec::new();
        let mut inten = Vec::new();
        for local in &locals {
            let local_flat = reshape(local, &[1, features])?;
            let joint = concat(&[local_flat, global_flat.clone()], 1)?;
            let hidden = leaky_relu(&self.fc.apply(&joint)?, T::from_f64(LEAKY_SLOPE));
            match &self.heads {
                Heads::Classification { azimuth, elevation, intensity } => {
                    az.push(azimuth.apply(&hidden)?);
                    el.push(elevation.apply(&hidden)?);
                    inten.push(intensity.apply(&hidden)?);
                }
                Heads::Regression { direction, intensity } => {
                    let raw = direction.apply(&hidden)?;
                    dir.push(l2_normalize_rows(&raw, T::from_f64(1e-12))?);
                    inten.push(softplus(&intensity.apply(&hidden)?));
                }
            }
        }
        Ok(match self.config.head_mode {
            HeadMode::Classification => {
                LcnetOutput::Classification { azimuth: az, elevation: el, intensity: inten }
            }
            HeadMode::Regression => LcnetOutput::Regression { direction: dir, intensity: inten },
        })
    }

    /// Decode network outputs into concrete per-observation lights.
    /// Classification takes the argmax bin of each head and decodes the
    /// bin midpoint; regression reads the unit direction and intensity off
    /// the heads directly.
    pub fn estimate_lights(
        &self,
        images: &[Tensor<T>],
        mask: &Tensor<T>,
    ) -> Result<Vec<DirectionalLight>> {
        let grid = self.config.grid;
        match self.forward(images, mask)? {
            LcnetOutput::Classification { azimuth, elevation, intensity } => {
                let mut lights = Vec::with_capacity(azimuth.len());
                for i in 0..azimuth.len() {
                    let az = argmax(&azimuth[i].to_vec());
                    let el = argmax(&elevation[i].to_vec());
                    let e_bin = argmax(&intensity[i].to_vec());
                    let direction = grid.decode_direction(az, el)?;
                    let e = grid.decode_intensity(e_bin)?;
                    lights.push(DirectionalLight::new(direction, e)?);
                }
                Ok(lights)
            }
            LcnetOutput::Regression { direction, intensity } => {
                let mut lights = Vec::with_capacity(direction.len());
                for i in 0..direction.len() {
                    let v = direction[i].to_vec();
                    let d = normalize([v[0].to_f64(), v[1].to_f64(), v[2].to_f64()])
                        .ok_or_else(|| arg_err("Lcnet", "zero direction estimate"))?;
                    // Softplus is positive in exact arithmetic but can
                    // underflow to 0.0 in f32; floor it so the estimate
                    // stays a constructible light.
                    let e = intensity[i].item()?.to_f64().max(1e-6);
                    lights.push(DirectionalLight::from_raw(d, e)?);
                }
                Ok(lights)
            }
        }
    }
}

fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Training loss against ground-truth lights. Classification sums the
/// three cross entropies with the intensity term weighted by `lambda_e`
/// (1.0 by default in training). Regression uses mean cosine distance for
/// directions plus `lambda_e` times the mean absolute relative intensity
/// error.
pub fn lighting_loss<T: Scalar>(
    output: &LcnetOutput<T>,
    targets: &[DirectionalLight],
    grid: &LightingGrid,
    lambda_e: f64,
) -> Result<Tensor<T>> {
    match output {
        LcnetOutput::Classification { azimuth, elevation, intensity } => {
            if azimuth.len() != targets.len() {
                return Err(arg_err(
                    "lighting_loss",
                    format!("{} outputs but {} targets", azimuth.len(), targets.len()),
                ));
            }
            let mut az_bins = Vec::with_capacity(targets.len());
            let mut el_bins = Vec::with_capacity(targets.len());
            let mut e_bins = Vec::with_capacity(targets.len());
            for t in targets {
                let (a, e) = grid.discretize_direction(t.direction)?;
                az_bins.push(a);
                el_bins.push(e);
                e_bins.push(grid.discretize_intensity(t.intensity).0);
            }
            let az = softmax_cross_entropy(&concat(azimuth, 0)?, &az_bins)?;
            let el = softmax_cross_entropy(&concat(elevation, 0)?, &el_bins)?;
            let en = softmax_cross_entropy(&concat(intensity, 0)?, &e_bins)?;
            add(&add(&az, &el)?, &affine(&en, T::from_f64(lambda_e), T::zero()))
        }
        LcnetOutput::Regression { direction, intensity } => {
            if direction.len() != targets.len() {
                return Err(arg_err(
                    "lighting_loss",
                    format!("{} outputs but {} targets", direction.len(), targets.len()),
                ));
            }
            let q = targets.len();
            let mut gt_dir = Vec::with_capacity(3 * q);
            let mut inv_e = Vec::with_capacity(q);
            let mut gt_e = Vec::with_capacity(q);
            for t in targets {
                gt_dir.extend(t.direction.iter().map(|&v| T::from_f64(v)));
                if !(t.intensity > 0.0) {
                    return Err(arg_err("lighting_loss", "target intensity must be positive"));
                }
                gt_e.push(T::from_f64(t.intensity));
                inv_e.push(T::from_f64(1.0 / t.intensity));
            }
            let pred_dir = concat(direction, 0)?;
            let gt = Tensor::new(&[q, 3], gt_dir)?;
            // mean over rows of (1 - d.d_hat): the elementwise mean of the
            // product picks up a factor 3, removed here
            let dir_loss = affine(&mean(&mul(&pred_dir, &gt)?)?, T::from_f64(-3.0), T::one());
            let pred_e = concat(intensity, 0)?;
            let gt_e = Tensor::new(&[q, 1], gt_e)?;
            let inv = Tensor::new(&[q, 1], inv_e)?;
            let rel = mean(&abs(&mul(&sub(&pred_e, &gt_e)?, &inv)?))?;
            add(&dir_loss, &affine(&rel, T::from_f64(lambda_e), T::zero()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::sample_lights;
    use crate::rng::rng_from_seed;

    fn random_images(count: usize, s: usize, seed: u64) -> (Vec<Tensor<f32>>, Tensor<f32>) {
        let mut rng = rng_from_seed(seed);
        let images = (0..count)
            .map(|_| {
                let v: Vec<f32> = (0..3 * s * s).map(|_| rng.gen_range(0.0..1.0)).collect();
                Tensor::new(&[3, s, s], v).unwrap()
            })
            .collect();
        let mask = Tensor::new(&[1, s, s], vec![1.0f32; s * s]).unwrap();
        (images, mask)
    }

    fn small_config() -> LcnetConfig {
        LcnetConfig { width_multiplier: 0.125, input_size: 16, ..Default::default() }
    }

    #[test]
    fn full_width_parameter_count() {
        let net = Lcnet::<f32>::build(LcnetConfig::default(), 1).unwrap();
        assert_eq!(net.parameter_count(), 4_434_076);
        let budget = 4.4e6;
        let dev = (net.parameter_count() as f64 - budget).abs() / budget;
        assert!(dev < 0.10, "parameter count off budget by {dev}");
    }

    #[test]
    fn head_shapes_match_the_grid() {
        let net = Lcnet::<f32>::build(small_config(), 2).unwrap();
        let (images, mask) = random_images(2, 16, 3);
        match net.forward(&images, &mask).unwrap() {
            LcnetOutput::Classification { azimuth, elevation, intensity } => {
                assert_eq!(azimuth.len(), 2);
                assert_eq!(azimuth[0].shape(), &[1, 36]);
                assert_eq!(elevation[0].shape(), &[1, 36]);
                assert_eq!(intensity[0].shape(), &[1, 20]);
            }
            _ => panic!("expected classification output"),
        }
    }

    #[test]
    fn builds_are_seed_deterministic() {
        let a = Lcnet::<f32>::build(small_config(), 11).unwrap();
        let b = Lcnet::<f32>::build(small_config(), 11).unwrap();
        let c = Lcnet::<f32>::build(small_config(), 12).unwrap();
        let flat = |net: &Lcnet<f32>| -> Vec<u32> {
            net.params()
                .iter()
                .flat_map(|(_, p)| p.to_vec().into_iter().map(f32::to_bits))
                .collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));
    }

    #[test]
    fn estimates_permute_with_their_observations() {
        let net = Lcnet::<f32>::build(small_config(), 5).unwrap();
        let (images, mask) = random_images(3, 16, 7);
        let base = net.estimate_lights(&images, &mask).unwrap();
        let order = [2usize, 0, 1];
        let permuted: Vec<Tensor<f32>> = order.iter().map(|&i| images[i].clone()).collect();
        let got = net.estimate_lights(&permuted, &mask).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(got[k].direction, base[i].direction, "light {k}");
            assert_eq!(got[k].intensity, base[i].intensity);
        }
    }

    #[test]
    fn duplicate_observations_share_their_estimate() {
        let net = Lcnet::<f32>::build(small_config(), 13).unwrap();
        let (images, mask) = random_images(1, 16, 17);
        let single = net.estimate_lights(&images, &mask).unwrap();
        let twice = vec![images[0].clone(), images[0].clone()];
        let both = net.estimate_lights(&twice, &mask).unwrap();
        assert_eq!(both[0].direction, single[0].direction);
        assert_eq!(both[1].direction, single[0].direction);
        assert_eq!(both[0].intensity, single[0].intensity);
    }

    #[test]
    fn estimated_lights_decode_from_grid_bins() {
        let net = Lcnet::<f32>::build(small_config(), 19).unwrap();
        let (images, mask) = random_images(4, 16, 23);
        let lights = net.estimate_lights(&images, &mask).unwrap();
        let grid = LightingGrid::default();
        for l in &lights {
            // every estimate sits exactly on a bin midpoint
            let (az, el) = grid.discretize_direction(l.direction).unwrap();
            let back = grid.decode_direction(az, el).unwrap();
            for k in 0..3 {
                assert!((l.direction[k] - back[k]).abs() < 1e-12);
            }
            let (bin, clamped) = grid.discretize_intensity(l.intensity);
            assert!(!clamped);
            assert!((l.intensity - grid.decode_intensity(bin).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_logits_hit_the_log_bin_counts() {
        let q = 3;
        let zeros =
            |k: usize| (0..q).map(|_| Tensor::new(&[1, k], vec![0.0f64; k]).unwrap()).collect();
        let output = LcnetOutput::Classification {
            azimuth: zeros(36),
            elevation: zeros(36),
            intensity: zeros(20),
        };
        let targets = sample_lights(q, 120.0, 120.0, (0.5, 1.5), 29).unwrap();
        let grid = LightingGrid::default();
        let loss = lighting_loss(&output, &targets, &grid, 1.0).unwrap();
        let expect = (36.0f64).ln() * 2.0 + (20.0f64).ln();
        assert!((loss.item().unwrap() - expect).abs() < 1e-9, "expected {expect}");
        // doubling the intensity weight adds exactly one more ln(20)
        let heavier = lighting_loss(&output, &targets, &grid, 2.0).unwrap();
        assert!(
            (heavier.item().unwrap() - expect - (20.0f64).ln()).abs() < 1e-9
        );
    }

    #[test]
    fn confident_correct_logits_drive_the_loss_to_zero() {
        let grid = LightingGrid::default();
        let targets = sample_lights(2, 120.0, 120.0, (0.5, 1.5), 31).unwrap();
        let spiked = |k: usize, bins: &[usize]| -> Vec<Tensor<f64>> {
            bins.iter()
                .map(|&b| {
                    let mut v = vec![0.0f64; k];
                    v[b] = 50.0;
                    Tensor::new(&[1, k], v).unwrap()
                })
                .collect()
        };
        let mut az = Vec::new();
        let mut el = Vec::new();
        let mut en = Vec::new();
        for t in &targets {
            let (a, e) = grid.discretize_direction(t.direction).unwrap();
            az.push(a);
            el.push(e);
            en.push(grid.discretize_intensity(t.intensity).0);
        }
        let output = LcnetOutput::Classification {
            azimuth: spiked(36, &az),
            elevation: spiked(36, &el),
            intensity: spiked(20, &en),
        };
        let loss = lighting_loss(&output, &targets, &grid, 1.0).unwrap();
        assert!(loss.item().unwrap() < 1e-6);
    }

    #[test]
    fn regression_heads_produce_unit_directions_and_positive_intensity() {
        let config = LcnetConfig { head_mode: HeadMode::Regression, ..small_config() };
        let net = Lcnet::<f32>::build(config, 37).unwrap();
        let (images, mask) = random_images(3, 16, 41);
        match net.forward(&images, &mask).unwrap() {
            LcnetOutput::Regression { direction, intensity } => {
                for d in &direction {
                    let v = d.to_vec();
                    let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                    assert!((n2 - 1.0).abs() < 1e-5);
                }
                for e in &intensity {
                    assert!(e.item().unwrap() > 0.0);
                }
            }
            _ => panic!("expected regression output"),
        }
    }

    #[test]
    fn perfect_regression_predictions_have_zero_loss() {
        let targets = sample_lights(3, 120.0, 120.0, (0.5, 1.5), 43).unwrap();
        let direction: Vec<Tensor<f64>> = targets
            .iter()
            .map(|t| {
                Tensor::new(&[1, 3], t.direction.to_vec()).unwrap()
            })
            .collect();
        let intensity: Vec<Tensor<f64>> = targets
            .iter()
            .map(|t| Tensor::new(&[1, 1], vec![t.intensity]).unwrap())
            .collect();
        let output = LcnetOutput::Regression { direction, intensity };
        let grid = LightingGrid::default();
        let loss = lighting_loss(&output, &targets, &grid, 1.0).unwrap();
        assert!(loss.item().unwrap().abs() < 1e-9);
    }

    #[test]
    fn loss_gradients_reach_every_parameter() {
        let net = Lcnet::<f64>::build(
            LcnetConfig { width_multiplier: 0.0625, input_size: 8, ..Default::default() },
            47,
        )
        .unwrap();
        let mut rng = rng_from_seed(53);
        let images: Vec<Tensor<f64>> = (0..2)
            .map(|_| {
                let v: Vec<f64> = (0..3 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
                Tensor::new(&[3, 8, 8], v).unwrap()
            })
            .collect();
        let mask = Tensor::new(&[1, 8, 8], vec![1.0f64; 64]).unwrap();
        let targets = sample_lights(2, 120.0, 120.0, (0.5, 1.5), 59).unwrap();
        let output = net.forward(&images, &mask).unwrap();
        let loss = lighting_loss(&output, &targets, &net.config.grid, 1.0).unwrap();
        loss.backward().unwrap();
        for (name, p) in net.params() {
            let grad = p.grad().unwrap_or_else(|| panic!("no grad for {name}"));
            assert!(grad.iter().any(|g| g.abs() > 0.0), "gradient for {name} is all zeros");
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let net = Lcnet::<f32>::build(small_config(), 61).unwrap();
        let (images, mask) = random_images(2, 16, 67);
        let (wrong, _) = random_images(1, 8, 71);
        assert!(net.forward(&[], &mask).is_err());
        assert!(net.forward(&wrong, &mask).is_err());
        let bad_mask = Tensor::new(&[1, 8, 8], vec![1.0f32; 64]).unwrap();
        assert!(net.forward(&images, &bad_mask).is_err());
        assert!(Lcnet::<f32>::build(
            LcnetConfig { input_size: 24, ..Default::default() },
            1
        )
        .is_err());
        assert!(Lcnet::<f32>::build(
            LcnetConfig { input_size: 256, ..Default::default() },
            1
        )
        .is_err());
    }
}
