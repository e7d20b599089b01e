//! Order-invariant normal-estimation network.
//!
//! Each observation (an image, usually with its light direction tiled into
//! three extra channels) runs through a shared fully convolutional
//! feature extractor; the per-observation features are fused with an
//! elementwise max, which makes the result independent of observation
//! order and count; a regression head decodes the fused feature into a
//! per-pixel unit normal field. The extractor downsamples twice and
//! upsamples once, so features live at half resolution and the head's
//! transposed convolution restores full resolution.

// f64 math through the trait so the crate builds without std
#[allow(unused_imports)]
use num_traits::Float as _;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng as _;

use crate::classic::{normalize_observations, test_time_rescale};
use crate::error::{arg_err, shape_err, Result};
use crate::render::DirectionalLight;
use crate::rng::subrng;
use crate::tensor::{
    concat, conv2d, deconv2d, l2_normalize_channels, leaky_relu, max_fuse, Scalar, Tensor,
};

/// Negative slope shared by every leaky ReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Epsilon guard for the final unit-normal projection.
pub const NORMALIZE_EPS: f64 = 1e-12;

/// How observations are presented to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InputMode {
    /// Image plus tiled unit light direction (6 input channels).
    Calibrated,
    /// As `Calibrated`, but images are observation-normalized and rescaled
    /// by sqrt(q / train_q) first, canceling albedo and global intensity.
    Normalized,
    /// Images alone (3 input channels), for the uncalibrated variant.
    ImagesOnly,
}

#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsfcnConfig {
    /// Scales every internal channel count; 1.0 is the full network.
    pub width_multiplier: f64,
    pub input_mode: InputMode,
    /// Observation count used in training, the reference point for the
    /// normalized-mode rescale.
    pub train_q: usize,
}

impl Default for PsfcnConfig {
    fn default() -> Self {
        PsfcnConfig { width_multiplier: 1.0, input_mode: InputMode::Calibrated, train_q: 16 }
    }
}

impl PsfcnConfig {
    fn scaled(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier).round() as usize).max(1)
    }

    pub fn input_channels(&self) -> usize {
        match self.input_mode {
            InputMode::Calibrated | InputMode::Normalized => 6,
            InputMode::ImagesOnly => 3,
        }
    }
}

/// (base output channels, stride, transposed?) per extractor layer.
const EXTRACTOR_PLAN: [(usize, usize, bool); 7] = [
    (64, 1, false),
    (128, 2, false),
    (128, 1, false),
    (256, 2, false),
    (256, 1, false),
    (128, 2, true),
    (128, 1, false),
];

/// Regression head: two convs, one upsampling transposed conv, then an
/// unscaled 3-channel projection.
const REGRESSION_PLAN: [(usize, usize, bool); 4] =
    [(128, 1, false), (128, 1, false), (64, 2, true), (3, 1, false)];

pub(crate) struct Layer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub transposed: bool,
}

impl<T: Scalar> Layer<T> {
    /// Kaiming-uniform init for a leaky-ReLU network: bound is
    /// `gain * sqrt(3 / fan_in)` with `gain = sqrt(2 / (1 + slope^2))`.
    pub(crate) fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        transposed: bool,
        seed: u64,
        tag: u64,
    ) -> Self {
        let shape: Vec<usize> = if transposed {
            vec![in_ch, out_ch, kernel, kernel]
        } else {
            vec![out_ch, in_ch, kernel, kernel]
        };
        let fan_in = (in_ch * kernel * kernel) as f64;
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let bound = gain * (3.0 / fan_in).sqrt();
        let mut rng = subrng(seed, tag);
        let count: usize = shape.iter().product();
        let values: Vec<T> =
            (0..count).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
        let weight = Tensor::param(&shape, values).expect("shape matches count");
        let bias = Tensor::param(&[out_ch], vec![T::zero(); out_ch]).expect("1d bias");
        Layer { weight, bias, stride, transposed }
    }

    pub(crate) fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.transposed {
            deconv2d(x, &self.weight, &self.bias, self.stride)
        } else {
            conv2d(x, &self.weight, &self.bias, self.stride, 1)
        }
    }

    pub(crate) fn parameter_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

/// Build a stack of layers from a plan, scaling hidden widths. Entries
/// with `scale_out == false` keep their exact output channel count.
fn build_stack<T: Scalar>(
    config: &PsfcnConfig,
    plan: &[(usize, usize, bool)],
    mut in_ch: usize,
    scale_last: bool,
    seed: u64,
    tag_base: u64,
) -> Vec<Layer<T>> {
    let mut layers = Vec::with_capacity(plan.len());
    for (i, &(base, stride, transposed)) in plan.iter().enumerate() {
        let last = i + 1 == plan.len();
        let out_ch = if last && !scale_last { base } else { config.scaled(base) };
        let kernel = if transposed { 4 } else { 3 };
        layers.push(Layer::init(in_ch, out_ch, kernel, stride, transposed, seed, tag_base + i as u64));
        in_ch = out_ch;
    }
    layers
}

/// The normal-estimation network. See the module docs for the layout.
pub struct Psfcn<T: Scalar> {
    pub config: PsfcnConfig,
    extractor: Vec<Layer<T>>,
    regression: Vec<Layer<T>>,
}

impl<T: Scalar> Psfcn<T> {
    /// Deterministically initialize all parameters from a seed.
    pub fn build(config: PsfcnConfig, seed: u64) -> Result<Self> {
        if !(config.width_multiplier > 0.0) || !config.width_multiplier.is_finite() {
            return Err(arg_err("Psfcn", "width multiplier must be positive"));
        }
        if config.train_q == 0 {
            return Err(arg_err("Psfcn", "train_q must be at least 1"));
        }
        let extractor = build_stack(&config, &EXTRACTOR_PLAN, config.input_channels(), true, seed, 0);
        let fused_ch = config.scaled(128);
        let regression = build_stack(&config, &REGRESSION_PLAN, fused_ch, false, seed, 100);
        Ok(Psfcn { config, extractor, regression })
    }

    /// Channel count of the fused feature map.
    pub fn feature_channels(&self) -> usize {
        self.config.scaled(128)
    }

    /// Named parameters in a stable order.
    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, stack) in
            [("extractor", &self.extractor), ("regression", &self.regression)]
        {
            for (i, layer) in stack.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), layer.weight.clone()));
                out.push((format!("{prefix}.{i}.bias"), layer.bias.clone()));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.extractor
            .iter()
            .chain(self.regression.iter())
            .map(Layer::parameter_count)
            .sum()
    }

    fn check_images(&self, images: &[Tensor<T>]) -> Result<(usize, usize)> {
        let first = images
            .first()
            .ok_or_else(|| arg_err("Psfcn", "need at least one image"))?;
        let shape = first.shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(shape_err("Psfcn", format!("images must be [3,H,W], got {shape:?}")));
        }
        let (h, w) = (shape[1], shape[2]);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(shape_err(
                "Psfcn",
                format!("height and width must be divisible by 4, got {h}x{w}"),
            ));
        }
        for img in images {
            if img.shape() != shape.as_slice() {
                return Err(shape_err(
                    "Psfcn",
                    format!("mixed image shapes {:?} and {shape:?}", img.shape()),
                ));
            }
        }
        Ok((h, w))
    }

    fn tiled_direction(&self, light: &DirectionalLight, h: usize, w: usize) -> Tensor<T> {
        let mut values = Vec::with_capacity(3 * h * w);
        for k in 0..3 {
            let v = T::from_f64(light.direction[k]);
            values.extend(core::iter::repeat(v).take(h * w));
        }
        Tensor::new(&[3, h, w], values).expect("consistent size")
    }

    /// Per-observation feature map at half resolution.
    pub fn extract(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &self.extractor {
            x = leaky_relu(&layer.apply(&x)?, T::from_f64(LEAKY_SLOPE));
        }
        Ok(x)
    }

    /// Decode a fused feature map into unit normals `[3,H,W]`.
    pub fn regress(&self, fused: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = fused.clone();
        let last = self.regression.len() - 1;
        for (i, layer) in self.regression.iter().enumerate() {
            x = layer.apply(&x)?;
            if i != last {
                x = leaky_relu(&x, T::from_f64(LEAKY_SLOPE));
            }
        }
        l2_normalize_channels(&x, T::from_f64(NORMALIZE_EPS))
    }

    /// Assemble per-observation network inputs according to the input mode.
    fn build_inputs(
        &self,
        images: &[Tensor<T>],
        lights: Option<&[DirectionalLight]>,
        h: usize,
        w: usize,
    ) -> Result<Vec<Tensor<T>>> {
        match self.config.input_mode {
            InputMode::ImagesOnly => {
                if lights.is_some() {
                    return Err(arg_err(
                        "Psfcn",
                        "images-only mode takes no light directions",
                    ));
                }
                Ok(images.to_vec())
            }
            InputMode::Calibrated | InputMode::Normalized => {
                let lights = lights.ok_or_else(|| {
                    arg_err("Psfcn", "calibrated modes require light directions")
                })?;
                if lights.len() != images.len() {
                    return Err(arg_err(
                        "Psfcn",
                        format!("{} images but {} lights", images.len(), lights.len()),
                    ));
                }
                let prepared: Vec<Tensor<T>> =
                    if self.config.input_mode == InputMode::Normalized {
                        let normalized = normalize_observations(images)?;
                        test_time_rescale(&normalized, images.len(), self.config.train_q)?
                    } else {
                        images.to_vec()
                    };
                prepared
                    .iter()
                    .zip(lights.iter())
                    .map(|(img, light)| {
                        concat(&[img.clone(), self.tiled_direction(light, h, w)], 0)
                    })
                    .collect()
            }
        }
    }

    /// Full forward pass: extract per observation, max-fuse, regress.
    /// Output is a `[3,H,W]` field of unit vectors.
    pub fn forward(
        &self,
        images: &[Tensor<T>],
        lights: Option<&[DirectionalLight]>,
    ) -> Result<Tensor<T>> {
        let (h, w) = self.check_images(images)?;
        let inputs = self.build_inputs(images, lights, h, w)?;
        let features: Vec<Tensor<T>> =
            inputs.iter().map(|x| self.extract(x)).collect::<Result<_>>()?;
        let fused = max_fuse(&features)?;
        self.regress(&fused)
    }
}
