//! Lighting CSV files: one `lx,ly,lz,e` row per image.
//!
//! Directions are normalized on read and rows pointing into the lower
//! hemisphere (l_z < -1e-6) are rejected, since such a light cannot
//! illuminate any front-facing surface. Order is preserved so row i
//! always describes image i.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use photostereo_core::render::DirectionalLight;

pub fn read_lights(path: &Path) -> Result<Vec<DirectionalLight>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_lights(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_lights(text: &str) -> Result<Vec<DirectionalLight>> {
    let mut lights = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            bail!("line {line_no}: expected 4 fields lx,ly,lz,e, got {}", fields.len());
        }
        let mut v = [0.0f64; 4];
        for (j, f) in fields.iter().enumerate() {
            v[j] = f
                .parse()
                .with_context(|| format!("line {line_no}: non-numeric field {f:?}"))?;
        }
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(len.is_finite() && len > 0.0) {
            bail!("line {line_no}: direction has zero length");
        }
        let dir = [v[0] / len, v[1] / len, v[2] / len];
        if dir[2] < -1e-6 {
            bail!(
                "line {line_no}: direction points into the lower hemisphere (lz = {})",
                dir[2]
            );
        }
        let light = DirectionalLight::new(dir, v[3])
            .with_context(|| format!("line {line_no}: invalid light"))?;
        lights.push(light);
    }
    if lights.is_empty() {
        bail!("no light rows found");
    }
    Ok(lights)
}

pub fn write_lights(path: &Path, lights: &[DirectionalLight]) -> Result<()> {
    let mut text = String::new();
    for l in lights {
        text.push_str(&format!(
            "{},{},{},{}\n",
            l.direction[0], l.direction[1], l.direction[2], l.intensity
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
