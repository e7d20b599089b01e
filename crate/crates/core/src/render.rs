//! Synthetic photometric-stereo scene rendering.
//!
//! Scenes are orthographic: the camera looks down the +z axis, x points
//! right and y points up. A scene is a per-pixel normal map (from an
//! analytic sphere or a heightfield), a reflectance model, and a set of
//! directional lights. Rendering follows the linear image formation model
//! `m = e * rho(n, l) * max(n.l, 0) + noise`, with optional cast shadows by
//! ray-marching a heightfield.
//!
//! All geometry and shading math runs in `f64`; the requested output
//! element type is only applied in a single final cast per pixel. Rendering
//! the same scene as `f32` therefore equals rendering it as `f64` and
//! casting, which the normalization equality tests rely on.

// f64 math through the trait so the crate builds without std
#[allow(unused_imports)]
use num_traits::Float as _;

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{arg_err, shape_err, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::tensor::{Scalar, Tensor};
use crate::vec3::{dot, norm, normalize, Vec3};

/// Per-pixel unit normals with a foreground mask.
///
/// Normals are stored channel-major (`[3,H,W]` order: all x, then all y,
/// then all z); background entries are zero. Row 0 is the top of the image
/// and y increases upward, so row 0 carries the largest y coordinates.
#[derive(Clone, Debug)]
pub struct NormalMap {
    pub height: usize,
    pub width: usize,
    pub normals: Vec<f64>,
    pub mask: Vec<bool>,
}

impl NormalMap {
    /// Validates that masked normals are unit length (within 1e-6).
    pub fn from_parts(
        height: usize,
        width: usize,
        normals: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let pixels = height * width;
        if normals.len() != 3 * pixels || mask.len() != pixels {
            return Err(shape_err(
                "NormalMap",
                alloc::format!(
                    "{}x{} needs {} normal values and {} mask entries, got {} and {}",
                    height,
                    width,
                    3 * pixels,
                    pixels,
                    normals.len(),
                    mask.len()
                ),
            ));
        }
        for p in 0..pixels {
            if !mask[p] {
                continue;
            }
            let n = [normals[p], normals[pixels + p], normals[2 * pixels + p]];
            let len = norm(n);
            if !(len.is_finite() && (len - 1.0).abs() <= 1e-6) {
                return Err(arg_err(
                    "NormalMap",
                    alloc::format!("masked pixel {p} has normal of length {len}"),
                ));
            }
        }
        Ok(NormalMap { height, width, normals, mask })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Normal at flat pixel index (row-major).
    pub fn normal_at(&self, p: usize) -> Vec3 {
        let pixels = self.pixels();
        [self.normals[p], self.normals[pixels + p], self.normals[2 * pixels + p]]
    }

    /// Normals as a `[3,H,W]` tensor (background zeros).
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let vals = self.normals.iter().map(|&v| T::from_f64(v)).collect();
        Tensor::new(&[3, self.height, self.width], vals).expect("consistent by construction")
    }
}

/// A directional light: unit direction toward the light, positive intensity.
#[derive(Clone, Copy, Debug)]
pub struct DirectionalLight {
    pub direction: Vec3,
    pub intensity: f64,
}

impl DirectionalLight {
    /// Checked constructor: unit direction (within 1e-6), upper hemisphere
    /// (`l_z >= -1e-6`), positive intensity.
    pub fn new(direction: Vec3, intensity: f64) -> Result<Self> {
        let len = norm(direction);
        if !(len.is_finite() && (len - 1.0).abs() <= 1e-6) {
            return Err(arg_err(
                "DirectionalLight",
                alloc::format!("direction length {len} is not 1"),
            ));
        }
        if direction[2] < -1e-6 {
            return Err(arg_err(
                "DirectionalLight",
                alloc::format!("direction z {} is below the horizon", direction[2]),
            ));
        }
        if !(intensity > 0.0) {
            return Err(arg_err("DirectionalLight", "intensity must be positive"));
        }
        Ok(DirectionalLight { direction, intensity })
    }

    /// Unchecked constructor for ambiguity experiments: the direction is
    /// normalized but may point below the horizon.
    pub fn from_raw(direction: Vec3, intensity: f64) -> Result<Self> {
        let dir = normalize(direction)
            .ok_or_else(|| arg_err("DirectionalLight", "direction has zero length"))?;
        if !(intensity > 0.0) {
            return Err(arg_err("DirectionalLight", "intensity must be positive"));
        }
        Ok(DirectionalLight { direction: dir, intensity })
    }

    /// Build from the azimuth/elevation convention: azimuth `phi` in
    /// [0°,180°] sweeps from +x (0°) through the zenith plane (90°) to +z
    /// then -x; elevation `theta` in [-90°,90°] lifts toward +y. The
    /// direction is `(cos(theta)cos(phi), sin(theta), cos(theta)sin(phi))`,
    /// so (90°, 0°) is the zenith (0,0,1).
    pub fn from_angles(phi_deg: f64, theta_deg: f64, intensity: f64) -> Result<Self> {
        Self::new(angles_to_direction(phi_deg, theta_deg), intensity)
    }

    /// Recover (azimuth, elevation) in degrees from the direction.
    pub fn angles(&self) -> (f64, f64) {
        direction_to_angles(self.direction)
    }
}

/// (azimuth, elevation) in degrees for a unit direction, inverting the
/// convention of [`DirectionalLight::from_angles`].
pub fn direction_to_angles(l: Vec3) -> (f64, f64) {
    let phi = l[2].atan2(l[0]).to_degrees();
    let theta = l[1].clamp(-1.0, 1.0).asin().to_degrees();
    (phi, theta)
}

/// Unit direction for (azimuth, elevation) in degrees; the inverse of
/// [`direction_to_angles`].
pub fn angles_to_direction(phi_deg: f64, theta_deg: f64) -> Vec3 {
    let phi = phi_deg.to_radians();
    let theta = theta_deg.to_radians();
    [theta.cos() * phi.cos(), theta.sin(), theta.cos() * phi.sin()]
}

/// Albedo for the Lambertian model: one value, or one per pixel.
#[derive(Clone, Debug)]
pub enum Albedo {
    Constant(f64),
    PerPixel(Vec<f64>),
}

impl Albedo {
    fn at(&self, p: usize) -> f64 {
        match self {
            Albedo::Constant(v) => *v,
            Albedo::PerPixel(map) => map[p],
        }
    }
}

/// Reflectance model. `Blend` mixes two models per pixel: weight `w` goes
/// to `a` and `1 - w` to `b`.
pub enum Brdf {
    Lambertian { albedo: Albedo },
    BlinnPhong { k_d: f64, k_s: f64, shininess: f64 },
    Blend { a: Box<Brdf>, b: Box<Brdf>, weights: Vec<f64> },
}

impl Brdf {
    fn validate(&self, pixels: usize) -> Result<()> {
        match self {
            Brdf::Lambertian { albedo } => {
                match albedo {
                    Albedo::Constant(v) => {
                        if !(*v > 0.0 && *v <= 1.0) {
                            return Err(arg_err("Brdf", "albedo must be in (0,1]"));
                        }
                    }
                    Albedo::PerPixel(map) => {
                        if map.len() != pixels {
                            return Err(shape_err(
                                "Brdf",
                                alloc::format!("albedo map has {} of {pixels} pixels", map.len()),
                            ));
                        }
                        // zeros are fine (background), and bas-relief
                        // transformed albedos may exceed 1
                        if map.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                            return Err(arg_err("Brdf", "albedo map values must be non-negative"));
                        }
                    }
                }
                Ok(())
            }
            Brdf::BlinnPhong { k_d, k_s, shininess } => {
                if !(*k_d >= 0.0 && *k_s >= 0.0) {
                    return Err(arg_err("Brdf", "k_d and k_s must be non-negative"));
                }
                if !(*shininess >= 1.0) {
                    return Err(arg_err("Brdf", "shininess must be at least 1"));
                }
                Ok(())
            }
            Brdf::Blend { a, b, weights } => {
                if weights.len() != pixels {
                    return Err(shape_err(
                        "Brdf",
                        alloc::format!("blend map has {} of {pixels} pixels", weights.len()),
                    ));
                }
                if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                    return Err(arg_err("Brdf", "blend weights must be in [0,1]"));
                }
                a.validate(pixels)?;
                b.validate(pixels)
            }
        }
    }

    /// Reflected radiance per unit intensity at pixel `p`, including the
    /// attached-shadow clamp.
    fn radiance(&self, p: usize, n: Vec3, l: Vec3) -> f64 {
        let ndl = dot(n, l);
        match self {
            Brdf::Lambertian { albedo } => albedo.at(p) * ndl.max(0.0),
            Brdf::BlinnPhong { k_d, k_s, shininess } => {
                let diffuse = k_d * ndl.max(0.0);
                if ndl > 0.0 {
                    // half vector between light and the +z view direction
                    let h = normalize([l[0], l[1], l[2] + 1.0]).unwrap_or([0.0, 0.0, 1.0]);
                    let ndh = dot(n, h).max(0.0);
                    diffuse + k_s * ndh.powf(*shininess)
                } else {
                    diffuse
                }
            }
            Brdf::Blend { a, b, weights } => {
                let w = weights[p];
                w * a.radiance(p, n, l) + (1.0 - w) * b.radiance(p, n, l)
            }
        }
    }
}

/// Analytic height surface over the unit square, with z in the same units
/// as x and y. Used for normal-map construction and cast-shadow marching.
pub trait HeightFn {
    fn z(&self, x: f64, y: f64) -> f64;
    /// Analytic partial derivatives (dz/dx, dz/dy).
    fn grad(&self, x: f64, y: f64) -> (f64, f64);
}

/// Hemisphere of radius 0.5 centered on the unit square; height 0 outside
/// the disk. Matches the geometry of [`sphere_normal_map`].
pub struct SphereHeight;

impl HeightFn for SphereHeight {
    fn z(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - 0.5, y - 0.5);
        (0.25 - dx * dx - dy * dy).max(0.0).sqrt()
    }

    fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - 0.5, y - 0.5);
        let sq = 0.25 - dx * dx - dy * dy;
        if sq <= 0.0 {
            return (0.0, 0.0);
        }
        let z = sq.sqrt();
        (-dx / z, -dy / z)
    }
}

/// Tilted plane `z = sx*x + sy*y + offset`.
pub struct PlaneHeight {
    pub sx: f64,
    pub sy: f64,
    pub offset: f64,
}

impl HeightFn for PlaneHeight {
    fn z(&self, x: f64, y: f64) -> f64 {
        self.sx * x + self.sy * y + self.offset
    }

    fn grad(&self, _x: f64, _y: f64) -> (f64, f64) {
        (self.sx, self.sy)
    }
}

/// Smooth random surface: a sum of sinusoidal plane waves
/// `amp * sin(2pi(fx*x + fy*y) + phase)`.
pub struct WavyHeight {
    /// (amplitude, x frequency, y frequency, phase) per term.
    pub terms: Vec<[f64; 4]>,
}

impl WavyHeight {
    /// Seeded random surface with `term_count` waves, amplitudes up to
    /// `max_amplitude`, integer-ish frequencies in [0.5, 2.5].
    pub fn random(seed: u64, term_count: usize, max_amplitude: f64) -> Self {
        let mut rng = rng_from_seed(seed);
        let terms = (0..term_count)
            .map(|_| {
                let amp = rng.gen_range(0.3..1.0) * max_amplitude;
                let fx = rng.gen_range(0.5..2.5);
                let fy = rng.gen_range(0.5..2.5);
                let phase = rng.gen_range(0.0..core::f64::consts::TAU);
                [amp, fx, fy, phase]
            })
            .collect();
        WavyHeight { terms }
    }
}

impl HeightFn for WavyHeight {
    fn z(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t[0] * (core::f64::consts::TAU * (t[1] * x + t[2] * y) + t[3]).sin())
            .sum()
    }

    fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for t in &self.terms {
            let c = t[0] * core::f64::consts::TAU
                * (core::f64::consts::TAU * (t[1] * x + t[2] * y) + t[3]).cos();
            gx += c * t[1];
            gy += c * t[2];
        }
        (gx, gy)
    }
}

/// Pixel center in normalized device coordinates ([-1,1]², y up).
fn pixel_ndc(r: usize, c: usize, h: usize, w: usize) -> (f64, f64) {
    let x = (c as f64 + 0.5) / w as f64 * 2.0 - 1.0;
    let y = 1.0 - (r as f64 + 0.5) / h as f64 * 2.0;
    (x, y)
}

/// Pixel center in the unit square ([0,1]², y up).
fn pixel_unit(r: usize, c: usize, h: usize, w: usize) -> (f64, f64) {
    let x = (c as f64 + 0.5) / w as f64;
    let y = 1.0 - (r as f64 + 0.5) / h as f64;
    (x, y)
}

/// Orthographic unit sphere filling the frame: normals
/// `(x, y, sqrt(1 - x² - y²))` in device coordinates, disk mask.
pub fn sphere_normal_map(resolution: usize) -> Result<NormalMap> {
    if resolution < 8 {
        return Err(arg_err("sphere_normal_map", "resolution must be at least 8"));
    }
    let (h, w) = (resolution, resolution);
    let pixels = h * w;
    let mut normals = vec![0.0; 3 * pixels];
    let mut mask = vec![false; pixels];
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            let (x, y) = pixel_ndc(r, c, h, w);
            let sq = 1.0 - x * x - y * y;
            if sq > 0.0 {
                mask[p] = true;
                normals[p] = x;
                normals[pixels + p] = y;
                normals[2 * pixels + p] = sq.sqrt();
            }
        }
    }
    NormalMap::from_parts(h, w, normals, mask)
}

/// Normal map of a heightfield over the unit square: `n` is the normalized
/// `(-dz/dx, -dz/dy, 1)`; every pixel is foreground.
pub fn heightfield_normal_map(height: &dyn HeightFn, resolution: usize) -> Result<NormalMap> {
    if resolution < 8 {
        return Err(arg_err("heightfield_normal_map", "resolution must be at least 8"));
    }
    let (h, w) = (resolution, resolution);
    let pixels = h * w;
    let mut normals = vec![0.0; 3 * pixels];
    let mask = vec![true; pixels];
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            let (x, y) = pixel_unit(r, c, h, w);
            let (gx, gy) = height.grad(x, y);
            let n = normalize([-gx, -gy, 1.0]).expect("z component is 1");
            normals[p] = n[0];
            normals[pixels + p] = n[1];
            normals[2 * pixels + p] = n[2];
        }
    }
    NormalMap::from_parts(h, w, normals, mask)
}

/// Weight-map generators for two-material blends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaterialMapKind {
    /// Horizontal gradient, 0 at the left edge to 1 at the right edge.
    Ramp,
    /// 8x8 checkerboard of 0/1 blocks.
    Checker,
    /// Thresholded smooth random field, values in {0,1}.
    Irregular,
}

/// Per-pixel blend weights in [0,1] for the requested pattern. The seed
/// only affects `Irregular`.
pub fn make_material_map(
    kind: MaterialMapKind,
    height: usize,
    width: usize,
    seed: u64,
) -> Vec<f64> {
    let mut map = vec![0.0; height * width];
    match kind {
        MaterialMapKind::Ramp => {
            for r in 0..height {
                for c in 0..width {
                    map[r * width + c] = c as f64 / (width - 1).max(1) as f64;
                }
            }
        }
        MaterialMapKind::Checker => {
            let bh = (height / 8).max(1);
            let bw = (width / 8).max(1);
            for r in 0..height {
                for c in 0..width {
                    map[r * width + c] = (((r / bh) + (c / bw)) % 2) as f64;
                }
            }
        }
        MaterialMapKind::Irregular => {
            // Bilinear upsample of a seeded coarse grid, thresholded at 0.5.
            const G: usize = 8;
            let mut rng = rng_from_seed(seed);
            let coarse: Vec<f64> = (0..G * G).map(|_| rng.gen_range(0.0..1.0)).collect();
            for r in 0..height {
                for c in 0..width {
                    let u = c as f64 / (width - 1).max(1) as f64 * (G - 1) as f64;
                    let v = r as f64 / (height - 1).max(1) as f64 * (G - 1) as f64;
                    let (u0, v0) = (u as usize, v as usize);
                    let (u1, v1) = ((u0 + 1).min(G - 1), (v0 + 1).min(G - 1));
                    let (fu, fv) = (u - u0 as f64, v - v0 as f64);
                    let top = coarse[v0 * G + u0] * (1.0 - fu) + coarse[v0 * G + u1] * fu;
                    let bot = coarse[v1 * G + u0] * (1.0 - fu) + coarse[v1 * G + u1] * fu;
                    let s = top * (1.0 - fv) + bot * fv;
                    map[r * width + c] = if s >= 0.5 { 1.0 } else { 0.0 };
                }
            }
        }
    }
    map
}

/// Draw `count` lights uniformly over an angular box centered on the
/// zenith: azimuth `90° ± azimuth_span/2`, elevation `0° ± elevation_span/2`,
/// intensity uniform in `intensity_range`. Per light the draw order is
/// azimuth, elevation, intensity.
pub fn sample_lights(
    count: usize,
    azimuth_span_deg: f64,
    elevation_span_deg: f64,
    intensity_range: (f64, f64),
    seed: u64,
) -> Result<Vec<DirectionalLight>> {
    if count == 0 {
        return Err(arg_err("sample_lights", "count must be at least 1"));
    }
    if !(0.0..=180.0).contains(&azimuth_span_deg) || !(0.0..=180.0).contains(&elevation_span_deg) {
        return Err(arg_err("sample_lights", "spans must lie in [0deg, 180deg]"));
    }
    let (e_lo, e_hi) = intensity_range;
    if !(e_lo > 0.0 && e_hi >= e_lo) {
        return Err(arg_err("sample_lights", "intensity range must be positive and ordered"));
    }
    let mut rng = rng_from_seed(seed);
    let draw = |lo: f64, hi: f64, rng: &mut Rng| {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    let mut lights = Vec::with_capacity(count);
    for _ in 0..count {
        let phi = 90.0 + draw(-azimuth_span_deg / 2.0, azimuth_span_deg / 2.0, &mut rng);
        let theta = draw(-elevation_span_deg / 2.0, elevation_span_deg / 2.0, &mut rng);
        let e = draw(e_lo, e_hi, &mut rng);
        lights.push(DirectionalLight::from_angles(phi, theta, e)?);
    }
    Ok(lights)
}

/// Rendering switches. `height` is required when `cast_shadow` is on, and
/// must describe the same surface the normal map was built from.
pub struct RenderOptions<'a> {
    pub cast_shadow: bool,
    /// Half-width of the additive uniform noise; 0 disables noise.
    pub noise_amplitude: f64,
    pub noise_seed: u64,
    pub height: Option<&'a dyn HeightFn>,
}

impl Default for RenderOptions<'static> {
    fn default() -> Self {
        RenderOptions { cast_shadow: false, noise_amplitude: 0.0, noise_seed: 0, height: None }
    }
}

fn ray_is_blocked(hf: &dyn HeightFn, x0: f64, y0: f64, z0: f64, l: Vec3, step: f64) -> bool {
    let mut t = step;
    while t <= 4.0 {
        let x = x0 + t * l[0];
        let y = y0 + t * l[1];
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return false;
        }
        if hf.z(x, y) > z0 + t * l[2] + 1e-9 {
            return true;
        }
        t += step;
    }
    false
}

/// Render one observation: `m = e * rho(n,l) * max(n.l, 0) (+ noise)` per
/// masked pixel, replicated across 3 channels; background exactly 0.
///
/// All math is `f64`; the output element type is applied in one final cast
/// per value. Noise is drawn per masked pixel in row-major order, added
/// inside the mask (shadowed pixels included), then clamped at 0.
pub fn render<T: Scalar>(
    map: &NormalMap,
    brdf: &Brdf,
    light: &DirectionalLight,
    opts: &RenderOptions<'_>,
) -> Result<Tensor<T>> {
    let pixels = map.pixels();
    brdf.validate(pixels)?;
    if opts.cast_shadow && opts.height.is_none() {
        return Err(arg_err("render", "cast_shadow requires a height function"));
    }
    let l = light.direction;
    let e = light.intensity;
    let step = 1.0 / map.width.max(map.height) as f64;
    let mut noise_rng = rng_from_seed(opts.noise_seed);
    let mut out = vec![T::zero(); 3 * pixels];
    for r in 0..map.height {
        for c in 0..map.width {
            let p = r * map.width + c;
            if !map.mask[p] {
                continue;
            }
            let n = map.normal_at(p);
            let mut m = e * brdf.radiance(p, n, l);
            if opts.cast_shadow && m > 0.0 {
                let hf = opts.height.expect("checked above");
                let (x, y) = pixel_unit(r, c, map.height, map.width);
                if ray_is_blocked(hf, x, y, hf.z(x, y), l, step) {
                    m = 0.0;
                }
            }
            if opts.noise_amplitude > 0.0 {
                let a = opts.noise_amplitude;
                m += noise_rng.gen_range(-a..a);
                m = m.max(0.0);
            }
            let v = T::from_f64(m);
            out[p] = v;
            out[pixels + p] = v;
            out[2 * pixels + p] = v;
        }
    }
    Tensor::new(&[3, map.height, map.width], out)
}

/// One synthetic observation set: q images of a fixed scene, one per light.
pub struct RenderedSample<T: Scalar> {
    pub images: Vec<Tensor<T>>,
    pub lights: Vec<DirectionalLight>,
}

/// Render the scene once per light with shared options. With noise enabled
/// each image uses `noise_seed + image index`.
pub fn render_sample<T: Scalar>(
    map: &NormalMap,
    brdf: &Brdf,
    lights: &[DirectionalLight],
    opts: &RenderOptions<'_>,
) -> Result<RenderedSample<T>> {
    let mut images = Vec::with_capacity(lights.len());
    for (i, light) in lights.iter().enumerate() {
        let per_image = RenderOptions {
            cast_shadow: opts.cast_shadow,
            noise_amplitude: opts.noise_amplitude,
            noise_seed: opts.noise_seed.wrapping_add(i as u64),
            height: opts.height,
        };
        images.push(render(map, brdf, light, &per_image)?);
    }
    Ok(RenderedSample { images, lights: lights.to_vec() })
}
