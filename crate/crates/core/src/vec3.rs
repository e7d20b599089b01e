//! Minimal fixed-size 3-vector helpers used by the geometry layer.

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    num_traits::Float::sqrt(dot(a, a))
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Normalize to unit length; returns `None` for the zero vector.
pub fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    if n > 0.0 {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

/// Multiply a row-major 3x3 matrix by a column vector.
pub fn mat_mul_vec(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// Angle between two (not necessarily unit) vectors, in radians.
///
/// Computed as `2*atan2(|a/|a| - b/|b||, |a/|a| + b/|b||)`, which is exact at
/// 0 and pi for bitwise-equal or bitwise-opposite inputs, unlike the arccos
/// of a rounded dot product.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    let (ua, ub) = match (normalize(a), normalize(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => return 0.0,
    };
    let d = [ua[0] - ub[0], ua[1] - ub[1], ua[2] - ub[2]];
    let s = add(ua, ub);
    num_traits::Float::atan2(norm(d), norm(s)) * 2.0
}

/// Radians to degrees, exact at 0 and pi.
pub fn to_degrees_exact(rad: f64) -> f64 {
    rad / core::f64::consts::PI * 180.0
}
