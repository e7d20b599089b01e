//! Discrete lighting space: azimuth/elevation/intensity bins.
//!
//! Lighting estimation is phrased as classification over evenly spaced
//! bins: azimuth in [0°,180°] and elevation in [-90°,90°] each split into
//! `direction_bins` bins, intensity in [0.2,2.0] split into
//! `intensity_bins`. Discretization floors into a bin (clamping at the
//! edges), decoding returns the bin midpoint, so a decoded direction is at
//! most the four-corner worst case away from the original.

use crate::error::{arg_err, Result};
use crate::render::{angles_to_direction, direction_to_angles};
use crate::vec3::{angle_between, Vec3};

/// Intensity values are valid in this closed range.
pub const INTENSITY_RANGE: (f64, f64) = (0.2, 2.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LightingGrid {
    /// Bin count for azimuth, and separately for elevation.
    pub direction_bins: usize,
    /// Bin count for intensity.
    pub intensity_bins: usize,
}

impl Default for LightingGrid {
    fn default() -> Self {
        LightingGrid { direction_bins: 36, intensity_bins: 20 }
    }
}

impl LightingGrid {
    pub fn new(direction_bins: usize, intensity_bins: usize) -> Result<Self> {
        if direction_bins == 0 || intensity_bins == 0 {
            return Err(arg_err("LightingGrid", "bin counts must be positive"));
        }
        Ok(LightingGrid { direction_bins, intensity_bins })
    }

    /// Width of an azimuth or elevation bin in degrees.
    pub fn angle_width(&self) -> f64 {
        180.0 / self.direction_bins as f64
    }

    /// Width of an intensity bin.
    pub fn intensity_width(&self) -> f64 {
        (INTENSITY_RANGE.1 - INTENSITY_RANGE.0) / self.intensity_bins as f64
    }

    /// Largest possible angular error of decode(discretize(.)), half a bin
    /// diagonal at the equator: half the bin width in each angle.
    pub fn delta_degrees(&self) -> f64 {
        self.angle_width() / 2.0
    }

    fn clamp_bin(&self, raw: f64, count: usize) -> usize {
        if !(raw > 0.0) {
            return 0;
        }
        (raw as usize).min(count - 1)
    }

    /// Bin a unit direction into (azimuth bin, elevation bin). Directions
    /// below the horizon (`l_z < -1e-6`) are rejected; boundary values
    /// clamp into the edge bins.
    pub fn discretize_direction(&self, l: Vec3) -> Result<(usize, usize)> {
        if l[2] < -1e-6 {
            return Err(arg_err(
                "discretize_direction",
                alloc::format!("direction z {} is below the horizon", l[2]),
            ));
        }
        let (phi, theta) = direction_to_angles(l);
        let w = self.angle_width();
        let az = self.clamp_bin(phi / w, self.direction_bins);
        let el = self.clamp_bin((theta + 90.0) / w, self.direction_bins);
        Ok((az, el))
    }

    /// Midpoint direction of a (azimuth, elevation) bin pair.
    pub fn decode_direction(&self, az_bin: usize, el_bin: usize) -> Result<Vec3> {
        if az_bin >= self.direction_bins || el_bin >= self.direction_bins {
            return Err(arg_err(
                "decode_direction",
                alloc::format!(
                    "bin ({az_bin},{el_bin}) outside {} bins",
                    self.direction_bins
                ),
            ));
        }
        let w = self.angle_width();
        let phi = (az_bin as f64 + 0.5) * w;
        let theta = -90.0 + (el_bin as f64 + 0.5) * w;
        Ok(angles_to_direction(phi, theta))
    }

    /// Bin an intensity; the flag reports whether the value fell outside
    /// [`INTENSITY_RANGE`] and was clamped.
    pub fn discretize_intensity(&self, e: f64) -> (usize, bool) {
        let (lo, hi) = INTENSITY_RANGE;
        let clamped = !(lo..=hi).contains(&e);
        let bin = self.clamp_bin((e - lo) / self.intensity_width(), self.intensity_bins);
        (bin, clamped)
    }

    /// Midpoint intensity of a bin.
    pub fn decode_intensity(&self, bin: usize) -> Result<f64> {
        if bin >= self.intensity_bins {
            return Err(arg_err(
                "decode_intensity",
                alloc::format!("bin {bin} outside {} bins", self.intensity_bins),
            ));
        }
        Ok(INTENSITY_RANGE.0 + (bin as f64 + 0.5) * self.intensity_width())
    }

    /// Maximum angle between the midpoint of a direction bin and any point
    /// of the bin. The maximum over the bin's angular box is attained at
    /// one of its four corners: along an edge with fixed azimuth the angle
    /// is monotone on each side of a single extremum of
    /// `cos d = A sin(theta) + B cos(theta)`, and along an edge with fixed
    /// elevation it grows with the azimuth offset.
    pub fn max_bin_error_degrees(&self, az_bin: usize, el_bin: usize) -> Result<f64> {
        let center = self.decode_direction(az_bin, el_bin)?;
        let w = self.angle_width();
        let phi0 = az_bin as f64 * w;
        let theta0 = -90.0 + el_bin as f64 * w;
        let mut worst = 0.0f64;
        for (dp, dt) in [(0.0, 0.0), (w, 0.0), (0.0, w), (w, w)] {
            let corner = angles_to_direction(phi0 + dp, (theta0 + dt).clamp(-90.0, 90.0));
            worst = worst.max(angle_between(center, corner).to_degrees());
        }
        Ok(worst)
    }
}
