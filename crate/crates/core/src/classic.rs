//! Classic least-squares photometric stereo, observation normalization,
//! and the generalized bas-relief ambiguity.
//!
//! The baseline solver inverts the Lambertian model per pixel: given q
//! observations `m_i = e_i * rho * max(n.l_i, 0)`, the lit observations
//! form a linear system in `b = rho * n` which is solved in least squares;
//! `rho = |b|` and `n = b / rho`. Observation normalization divides each
//! pixel's q-vector by its L2 norm, canceling albedo and uniform shading
//! scale. The bas-relief helpers transform a scene so that renders are
//! provably unchanged, which the solver and network tests lean on.

// f64 math through the trait so the crate builds without std
#[allow(unused_imports)]
use num_traits::Float as _;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, degenerate_err, shape_err, Result};
use crate::render::{DirectionalLight, NormalMap};
use crate::tensor::{Scalar, Tensor};
use crate::vec3::{norm, normalize, Vec3};

/// Observations at or below this value count as shadowed and are excluded
/// from the least-squares system.
pub const LIT_THRESHOLD: f64 = 1e-6;

/// Per-pixel output of the baseline solver. `albedo` is row-major with
/// zeros outside the solved mask.
pub struct SurfaceEstimate {
    pub normals: NormalMap,
    pub albedo: Vec<f64>,
}

fn check_stack<T: Scalar>(
    op: &'static str,
    images: &[Tensor<T>],
) -> Result<(usize, usize)> {
    let first = images
        .first()
        .ok_or_else(|| arg_err(op, "need at least one image"))?;
    let shape = first.shape().to_vec();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(shape_err(op, alloc::format!("images must be [3,H,W], got {shape:?}")));
    }
    for img in images {
        if img.shape() != shape.as_slice() {
            return Err(shape_err(
                op,
                alloc::format!("mixed image shapes {:?} and {shape:?}", img.shape()),
            ));
        }
    }
    Ok((shape[1], shape[2]))
}

/// Solve a 3x3 system by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot is negligible relative to the matrix scale,
/// which signals a rank-deficient light configuration.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for k in 0..3 {
        let mut piv = k;
        for r in k + 1..3 {
            if a[r][k].abs() > a[piv][k].abs() {
                piv = r;
            }
        }
        if a[piv][k].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for r in k + 1..3 {
            let f = a[r][k] / a[k][k];
            for c in k..3 {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let mut s = b[k];
        for c in k + 1..3 {
            s -= a[k][c] * x[c];
        }
        x[k] = s / a[k][k];
    }
    Some(x)
}

/// Classic calibrated photometric stereo under the Lambertian model.
///
/// Per masked pixel the luminance (channel mean) of each image is an
/// observation; observations above [`LIT_THRESHOLD`] contribute the row
/// `e_i * l_i` to a least-squares system for `rho * n`. Pixels with fewer
/// than 3 lit observations or a rank-deficient system are dropped from the
/// output mask rather than reported as errors.
pub fn l2_solve<T: Scalar>(
    images: &[Tensor<T>],
    lights: &[DirectionalLight],
    mask: &[bool],
) -> Result<SurfaceEstimate> {
    let (h, w) = check_stack("l2_solve", images)?;
    let pixels = h * w;
    if lights.len() != images.len() {
        return Err(arg_err(
            "l2_solve",
            alloc::format!("{} images but {} lights", images.len(), lights.len()),
        ));
    }
    if images.len() < 3 {
        return Err(arg_err("l2_solve", "need at least 3 images"));
    }
    if mask.len() != pixels {
        return Err(shape_err(
            "l2_solve",
            alloc::format!("mask has {} of {pixels} pixels", mask.len()),
        ));
    }
    let luminance: Vec<Vec<f64>> = images
        .iter()
        .map(|img| {
            let d = img.data();
            (0..pixels)
                .map(|p| {
                    (d[p].to_f64() + d[pixels + p].to_f64() + d[2 * pixels + p].to_f64()) / 3.0
                })
                .collect()
        })
        .collect();
    let mut normals = vec![0.0; 3 * pixels];
    let mut albedo = vec![0.0; pixels];
    let mut out_mask = vec![false; pixels];
    for p in 0..pixels {
        if !mask[p] {
            continue;
        }
        let mut a = [[0.0f64; 3]; 3];
        let mut rhs = [0.0f64; 3];
        let mut lit = 0usize;
        for (i, light) in lights.iter().enumerate() {
            let m = luminance[i][p];
            if m <= LIT_THRESHOLD {
                continue;
            }
            lit += 1;
            let row: Vec3 = [
                light.intensity * light.direction[0],
                light.intensity * light.direction[1],
                light.intensity * light.direction[2],
            ];
            for r in 0..3 {
                for c in 0..3 {
                    a[r][c] += row[r] * row[c];
                }
                rhs[r] += m * row[r];
            }
        }
        if lit < 3 {
            continue;
        }
        let Some(b) = solve3(a, rhs) else {
            continue;
        };
        let rho = norm(b);
        if !(rho > 1e-12) || !rho.is_finite() {
            continue;
        }
        normals[p] = b[0] / rho;
        normals[pixels + p] = b[1] / rho;
        normals[2 * pixels + p] = b[2] / rho;
        albedo[p] = rho;
        out_mask[p] = true;
    }
    let normals = NormalMap::from_parts(h, w, normals, out_mask)?;
    Ok(SurfaceEstimate { normals, albedo })
}

/// Divide each pixel's per-channel observation vector (across the q
/// images) by its L2 norm. Pixels dark in every image stay exactly zero.
/// Albedo and any shared per-pixel scale cancel out of the result.
pub fn normalize_observations<T: Scalar>(images: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
    let (h, w) = check_stack("normalize_observations", images)?;
    let n = 3 * h * w;
    let mut out: Vec<Vec<T>> = images.iter().map(|img| img.to_vec()).collect();
    for j in 0..n {
        let mut sq = T::zero();
        for img in &out {
            sq = sq + img[j] * img[j];
        }
        if sq > T::zero() {
            let denom = sq.sqrt();
            for img in &mut out {
                img[j] = img[j] / denom;
            }
        }
    }
    out.into_iter().map(|v| Tensor::new(&[3, h, w], v)).collect()
}

/// Rescale a normalized stack by `sqrt(t / q)` where `t` is the test-time
/// image count and `q` the training-time count, so test-time magnitudes
/// match the statistics the network saw in training. With `t == q` the
/// factor is exactly 1.
pub fn test_time_rescale<T: Scalar>(
    images: &[Tensor<T>],
    test_count: usize,
    train_count: usize,
) -> Result<Vec<Tensor<T>>> {
    let (h, w) = check_stack("test_time_rescale", images)?;
    if test_count == 0 || train_count == 0 {
        return Err(arg_err("test_time_rescale", "image counts must be positive"));
    }
    let factor = T::from_f64((test_count as f64 / train_count as f64).sqrt());
    images
        .iter()
        .map(|img| {
            let vals = img.data().iter().map(|&v| v * factor).collect();
            Tensor::new(&[3, h, w], vals)
        })
        .collect()
}

/// Generalized bas-relief transform parameters. The matrix is
/// `[[1,0,0],[0,1,0],[mu,nu,lambda]]`; `lambda` must be nonzero for the
/// transform to be invertible.
#[derive(Clone, Copy, Debug)]
pub struct GbrMatrix {
    pub mu: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl GbrMatrix {
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [self.mu, self.nu, self.lambda]]
    }

    /// Inverse transpose, the matrix that acts on normals.
    pub fn inverse_transpose(&self) -> [[f64; 3]; 3] {
        let l = self.lambda;
        [
            [1.0, 0.0, -self.mu / l],
            [0.0, 1.0, -self.nu / l],
            [0.0, 0.0, 1.0 / l],
        ]
    }
}

/// Apply the bas-relief ambiguity to a whole scene:
/// `n' = G^-T n / |G^-T n|`, `rho' = rho * |G^-T n|`, `l' = G l / |G l|`,
/// `e' = e * |G l|`. Renders of the transformed scene equal renders of the
/// original because `rho' e' (n'.l') = rho e (n.l)` pixel for pixel.
pub fn gbr_transform(
    map: &NormalMap,
    albedo: &[f64],
    lights: &[DirectionalLight],
    g: &GbrMatrix,
) -> Result<(NormalMap, Vec<f64>, Vec<DirectionalLight>)> {
    if g.lambda.abs() < 1e-12 {
        return Err(degenerate_err("gbr_transform", "lambda must be nonzero"));
    }
    let pixels = map.pixels();
    if albedo.len() != pixels {
        return Err(shape_err(
            "gbr_transform",
            alloc::format!("albedo has {} of {pixels} pixels", albedo.len()),
        ));
    }
    let git = g.inverse_transpose();
    let gm = g.matrix();
    let mut normals = vec![0.0; 3 * pixels];
    let mut new_albedo = vec![0.0; pixels];
    for p in 0..pixels {
        if !map.mask[p] {
            continue;
        }
        let n = map.normal_at(p);
        let t = crate::vec3::mat_mul_vec(&git, n);
        let len = norm(t);
        let unit = normalize(t).ok_or_else(|| {
            degenerate_err("gbr_transform", alloc::format!("normal at pixel {p} collapsed"))
        })?;
        normals[p] = unit[0];
        normals[pixels + p] = unit[1];
        normals[2 * pixels + p] = unit[2];
        new_albedo[p] = albedo[p] * len;
    }
    let new_map = NormalMap::from_parts(map.height, map.width, normals, map.mask.clone())?;
    let new_lights = lights
        .iter()
        .map(|light| {
            let v = crate::vec3::mat_mul_vec(&gm, light.direction);
            let len = norm(v);
            DirectionalLight::from_raw(v, light.intensity * len)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((new_map, new_albedo, new_lights))
}
