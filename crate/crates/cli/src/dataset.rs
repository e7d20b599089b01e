//! Scene configuration files and rendered dataset directories.
//!
//! A scene config is the JSON form of the in-memory dataset spec plus a
//! render noise amplitude. `render` materializes it on disk as one
//! directory per sample (images, lights, ground-truth normals, mask) with
//! a manifest.json tying them together; training commands synthesize the
//! same scenes in memory instead, since image stacks at full scale are
//! far larger than the generator that makes them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use photostereo_core::render::{
    render_sample, Albedo, Brdf, NormalMap, RenderOptions, RenderedSample,
};
use photostereo_core::rng::subseed;
use photostereo_core::train::{generate_dataset, Dataset, DatasetSpec, SceneSample};
use serde::{Deserialize, Serialize};

use crate::lights::write_lights;
use crate::pfm::{write_pfm, PfmImage};

/// Noise seeds live in their own stream so rendered files never reuse the
/// scene- or rig-generation draws.
const TAG_RENDER_NOISE: u64 = 4 << 40;

/// On-disk scene configuration: dataset spec fields plus rendering noise.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
pub struct SceneConfig {
    #[serde(flatten)]
    pub spec: DatasetSpec,
    /// Half-width of additive uniform noise applied by `render` (not by
    /// the training commands, which take noise on the command line).
    #[serde(default)]
    pub noise_amplitude: f64,
}

pub fn read_scene_config(path: &Path) -> Result<SceneConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: SceneConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if config.spec.count == 0 {
        bail!("{}: count must be at least 1", path.display());
    }
    Ok(config)
}

#[derive(Serialize, Deserialize)]
pub struct ManifestSample {
    pub dir: String,
    pub images: Vec<String>,
    pub lights: String,
    pub normals: String,
    pub mask: String,
    pub brdf: String,
    pub render_seed: u64,
    pub holdout: bool,
}

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub resolution: usize,
    pub samples: Vec<ManifestSample>,
}

fn describe_brdf(brdf: &Brdf) -> String {
    match brdf {
        Brdf::Lambertian { albedo: Albedo::Constant(v) } => format!("lambertian(albedo={v:.4})"),
        Brdf::Lambertian { albedo: Albedo::PerPixel(_) } => "lambertian(albedo=map)".to_owned(),
        Brdf::BlinnPhong { k_d, k_s, shininess } => {
            format!("blinn-phong(kd={k_d:.4},ks={k_s:.4},shininess={shininess:.2})")
        }
        Brdf::Blend { a, b, .. } => {
            format!("blend({},{})", describe_brdf(a), describe_brdf(b))
        }
    }
}

fn normals_image(map: &NormalMap) -> PfmImage {
    let hw = map.pixels();
    let mut data = vec![0.0f32; 3 * hw];
    for p in 0..hw {
        if map.mask[p] {
            // the map stores normals channel-major, same as the image
            for c in 0..3 {
                data[c * hw + p] = map.normals[c * hw + p] as f32;
            }
        }
    }
    PfmImage { height: map.height, width: map.width, channels: 3, data }
}

fn mask_image(map: &NormalMap) -> PfmImage {
    let data = map.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    PfmImage { height: map.height, width: map.width, channels: 1, data }
}

fn write_sample(
    root: &Path,
    index: usize,
    sample: &SceneSample,
    rendered: &RenderedSample<f32>,
    render_seed: u64,
) -> Result<ManifestSample> {
    let dir_name = format!("sample_{index:03}");
    let dir = root.join(&dir_name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut image_names = Vec::with_capacity(rendered.images.len());
    for (i, img) in rendered.images.iter().enumerate() {
        let name = format!("img_{i:03}.pfm");
        let image = PfmImage::new(
            sample.map.height,
            sample.map.width,
            3,
            img.to_vec(),
        )?;
        write_pfm(&dir.join(&name), &image)?;
        image_names.push(name);
    }
    write_lights(&dir.join("lights.csv"), &rendered.lights)?;
    write_pfm(&dir.join("normals.pfm"), &normals_image(&sample.map))?;
    write_pfm(&dir.join("mask.pfm"), &mask_image(&sample.map))?;

    Ok(ManifestSample {
        dir: dir_name,
        images: image_names,
        lights: "lights.csv".to_owned(),
        normals: "normals.pfm".to_owned(),
        mask: "mask.pfm".to_owned(),
        brdf: describe_brdf(&sample.brdf),
        render_seed,
        holdout: sample.holdout,
    })
}

/// Generate the scenes of `config` and write them under `out` as a
/// rendered dataset, returning the number of samples written.
pub fn render_dataset(config: &SceneConfig, out: &Path) -> Result<usize> {
    let data: Dataset = generate_dataset(&config.spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest =
        Manifest { version: 1, resolution: data.resolution, samples: Vec::new() };
    for (i, sample) in data.samples.iter().enumerate() {
        let render_seed = subseed(config.spec.seed, TAG_RENDER_NOISE + i as u64);
        let opts = RenderOptions {
            noise_amplitude: config.noise_amplitude,
            noise_seed: render_seed,
            ..RenderOptions::default()
        };
        let rendered: RenderedSample<f32> =
            render_sample(&sample.map, &sample.brdf, &sample.lights, &opts)?;
        manifest.samples.push(write_sample(out, i, sample, &rendered, render_seed)?);
    }
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out.join("manifest.json"), manifest_json)
        .with_context(|| format!("writing {}", out.join("manifest.json").display()))?;
    Ok(data.samples.len())
}

/// Read every `img_*.pfm` in a sample directory, lexicographically.
pub fn read_image_stack(dir: &Path) -> Result<Vec<PfmImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("img_") && n.ends_with(".pfm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} contains no img_*.pfm files", dir.display());
    }
    let mut images = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = crate::pfm::read_pfm(path)?;
        if img.channels != 3 {
            bail!("{} has {} channels, expected 3", path.display(), img.channels);
        }
        images.push(img);
    }
    let (h, w) = (images[0].height, images[0].width);
    if images.iter().any(|img| img.height != h || img.width != w) {
        bail!("{} mixes image sizes", dir.display());
    }
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use photostereo_core::train::SceneMix;

    #[test]
    fn scene_config_parses_flat_json() {
        let text = r#"{
            "mix": "general",
            "count": 3,
            "resolution": 16,
            "lights_per_sample": 4,
            "seed": 9,
            "noise_amplitude": 0.01
        }"#;
        let config: SceneConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.spec.count, 3);
        assert_eq!(config.spec.resolution, 16);
        assert_eq!(config.spec.lights_per_sample, 4);
        assert_eq!(config.spec.seed, 9);
        assert!(matches!(config.spec.mix, SceneMix::General));
        assert_eq!(config.noise_amplitude, 0.01);
        // defaults fill the rest
        assert_eq!(config.spec.intensity_range, (0.2, 2.0));
    }

    #[test]
    fn rendered_dataset_has_consistent_layout() {
        let dir = tempfile::tempdir().unwrap();
        let config = SceneConfig {
            spec: DatasetSpec {
                count: 2,
                resolution: 8,
                lights_per_sample: 3,
                seed: 5,
                ..DatasetSpec::default()
            },
            noise_amplitude: 0.0,
        };
        let written = render_dataset(&config, dir.path()).unwrap();
        assert_eq!(written, 2);
        let manifest: Manifest = serde_json::from_str(
            &fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.version, 1);
        assert_eq!(manifest.resolution, 8);
        assert_eq!(manifest.samples.len(), 2);
        for sample in &manifest.samples {
            let base = dir.path().join(&sample.dir);
            assert_eq!(sample.images.len(), 3);
            for name in &sample.images {
                assert!(base.join(name).exists());
            }
            let lights = crate::lights::read_lights(&base.join(&sample.lights)).unwrap();
            assert_eq!(lights.len(), sample.images.len());
            assert!(base.join(&sample.normals).exists());
            assert!(base.join(&sample.mask).exists());
            assert!(!sample.brdf.is_empty());
        }
        let stack = read_image_stack(&dir.path().join("sample_000")).unwrap();
        assert_eq!(stack.len(), 3);
        assert_eq!(stack[0].height, 8);
    }
}
