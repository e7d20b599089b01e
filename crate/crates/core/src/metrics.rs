//! Evaluation metrics: angular error for normals and directions, and
//! scale-invariant relative error for intensities.
//!
//! Angles use `2 * atan2(|a - b|, |a + b|)`, which is algebraically the
//! angle between unit vectors but stays exact at the endpoints: identical
//! vectors give exactly 0 and opposite vectors exactly pi, where the
//! arccos form loses precision.

use crate::error::{arg_err, degenerate_err, shape_err, Result};
use crate::render::NormalMap;
use crate::vec3::{angle_between, to_degrees_exact, Vec3};

/// Angle between two vectors in degrees, exact at 0 and 180.
pub fn angular_error_degrees(a: Vec3, b: Vec3) -> f64 {
    to_degrees_exact(angle_between(a, b))
}

/// Mean angular error in degrees over the intersection of the two masks.
/// Errors if the masks do not overlap at all.
pub fn mean_angular_error_degrees(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(shape_err(
            "mean_angular_error_degrees",
            alloc::format!(
                "{}x{} prediction vs {}x{} reference",
                pred.height,
                pred.width,
                gt.height,
                gt.width
            ),
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..pred.pixels() {
        if pred.mask[p] && gt.mask[p] {
            total += angular_error_degrees(pred.normal_at(p), gt.normal_at(p));
            count += 1;
        }
    }
    if count == 0 {
        return Err(degenerate_err("mean_angular_error_degrees", "empty mask overlap"));
    }
    Ok(total / count as f64)
}

/// Mean angular error in degrees between paired direction lists.
pub fn mean_direction_error_degrees(est: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(shape_err(
            "mean_direction_error_degrees",
            alloc::format!("{} estimates vs {} references", est.len(), gt.len()),
        ));
    }
    if est.is_empty() {
        return Err(arg_err("mean_direction_error_degrees", "need at least one pair"));
    }
    let total: f64 = est
        .iter()
        .zip(gt.iter())
        .map(|(&a, &b)| angular_error_degrees(a, b))
        .sum();
    Ok(total / est.len() as f64)
}

/// Scale-invariant intensity error. Fits the single scale
/// `s = sum(e * ref) / sum(e^2)` that best maps estimates onto the
/// reference in least squares, then reports
/// `(s, mean(|s * e_i - ref_i| / ref_i))`.
pub fn scale_invariant_intensity_error(est: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
    if est.len() != reference.len() {
        return Err(shape_err(
            "scale_invariant_intensity_error",
            alloc::format!("{} estimates vs {} references", est.len(), reference.len()),
        ));
    }
    if est.is_empty() {
        return Err(arg_err("scale_invariant_intensity_error", "need at least one pair"));
    }
    if reference.iter().any(|&v| !(v > 0.0)) {
        return Err(arg_err(
            "scale_invariant_intensity_error",
            "reference intensities must be positive",
        ));
    }
    let cross: f64 = est.iter().zip(reference.iter()).map(|(&e, &r)| e * r).sum();
    let sq: f64 = est.iter().map(|&e| e * e).sum();
    if !(sq > 0.0) {
        return Err(degenerate_err(
            "scale_invariant_intensity_error",
            "all estimated intensities are zero",
        ));
    }
    let s = cross / sq;
    let total: f64 = est
        .iter()
        .zip(reference.iter())
        .map(|(&e, &r)| (s * e - r).abs() / r)
        .sum();
    Ok((s, total / est.len() as f64))
}

/// Convenience wrapper: relative error of per-light intensity estimates.
pub fn intensity_relative_error(est: &[f64], reference: &[f64]) -> Result<f64> {
    scale_invariant_intensity_error(est, reference).map(|(_, re)| re)
}
