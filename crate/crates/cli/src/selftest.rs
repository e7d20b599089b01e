//! The `selftest` subcommand: fast invariant checks across the whole
//! stack, printing one `[PASS]` line each. Any failure aborts with a data
//! error, so a 0 exit means every check ran and held.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use photostereo_core::classic::{gbr_transform, l2_solve, normalize_observations, GbrMatrix};
use photostereo_core::grid::LightingGrid;
use photostereo_core::metrics::{
    angular_error_degrees, mean_angular_error_degrees, scale_invariant_intensity_error,
};
use photostereo_core::psfcn::{InputMode, Psfcn, PsfcnConfig};
use photostereo_core::render::{
    render, render_sample, sphere_normal_map, Albedo, Brdf, DirectionalLight, RenderOptions,
    RenderedSample,
};
use photostereo_core::Tensor;

use crate::checkpoint::{self, Model};
use crate::lights::{read_lights, write_lights};
use crate::pfm::{read_pfm, write_pfm, PfmImage};

struct Scratch {
    dir: PathBuf,
}

impl Scratch {
    fn new() -> Result<Self> {
        let dir = std::env::temp_dir()
            .join(format!("photostereo-selftest-{}", std::process::id()));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Scratch { dir })
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn check(condition: bool, name: &str, detail: String) -> Result<()> {
    if condition {
        println!("[PASS] {name}");
        Ok(())
    } else {
        bail!("[FAIL] {name}: {detail}");
    }
}

fn rig() -> Result<Vec<DirectionalLight>> {
    Ok(vec![
        DirectionalLight::from_angles(90.0, 0.0, 1.0)?,
        DirectionalLight::from_angles(60.0, 15.0, 0.8)?,
        DirectionalLight::from_angles(120.0, -20.0, 1.3)?,
        DirectionalLight::from_angles(75.0, -35.0, 0.6)?,
        DirectionalLight::from_angles(105.0, 30.0, 1.1)?,
        DirectionalLight::from_angles(90.0, 45.0, 0.9)?,
    ])
}

fn pfm_roundtrip(scratch: &Scratch) -> Result<()> {
    let path = scratch.dir.join("roundtrip.pfm");
    let data: Vec<f32> = (0..3 * 7 * 5).map(|i| ((i * 37 % 97) as f32 - 48.0) * 0.173).collect();
    let img = PfmImage::new(7, 5, 3, data)?;
    write_pfm(&path, &img)?;
    let back = read_pfm(&path)?;
    check(back == img, "pfm roundtrip is bit-identical", format!("{path:?} differs"))
}

fn lights_roundtrip(scratch: &Scratch) -> Result<()> {
    let path = scratch.dir.join("lights.csv");
    let lights = rig()?;
    write_lights(&path, &lights)?;
    let back = read_lights(&path)?;
    let ok = back.len() == lights.len()
        && lights.iter().zip(&back).all(|(a, b)| {
            (0..3).all(|k| (a.direction[k] - b.direction[k]).abs() < 1e-6)
                && (a.intensity - b.intensity).abs() < 1e-6
        });
    check(ok, "lights csv roundtrip within 1e-6", "values drifted".into())?;
    let rejected = read_lights_text("0,0,-1,1.0").is_err();
    check(rejected, "lower-hemisphere light row is rejected", "row was accepted".into())
}

fn read_lights_text(text: &str) -> Result<Vec<DirectionalLight>> {
    let dir = std::env::temp_dir()
        .join(format!("photostereo-selftest-aux-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    let path = dir.join("aux-lights.csv");
    fs::write(&path, text)?;
    let result = read_lights(&path);
    let _ = fs::remove_dir_all(&dir);
    result
}

fn checkpoint_roundtrip(scratch: &Scratch) -> Result<()> {
    let path = scratch.dir.join("model.nfck");
    let config = PsfcnConfig {
        width_multiplier: 1.0 / 16.0,
        input_mode: InputMode::Calibrated,
        train_q: 2,
    };
    let net: Psfcn<f32> = Psfcn::build(config, 17)?;
    let values: Vec<f32> = (0..3 * 4 * 4).map(|i| 0.03 + i as f32 * 0.011).collect();
    let img = Tensor::new(&[3, 4, 4], values)?;
    let lights = vec![
        DirectionalLight::from_angles(80.0, 10.0, 1.0)?,
        DirectionalLight::from_angles(100.0, -15.0, 1.0)?,
    ];
    let before = net.forward(&[img.clone(), img.clone()], Some(&lights))?.to_vec();
    checkpoint::save(&path, &Model::Psfcn(net), 17, 3, None)?;
    let ck = checkpoint::load(&path)?;
    if ck.seed != 17 || ck.epoch != 3 || ck.adam.is_some() {
        bail!("[FAIL] checkpoint roundtrip: bookkeeping fields changed");
    }
    let loaded = match ck.model {
        Model::Psfcn(net) => net,
        Model::Lcnet(_) => bail!("[FAIL] checkpoint roundtrip: wrong model kind"),
    };
    let after = loaded.forward(&[img.clone(), img], Some(&lights))?.to_vec();
    check(
        before == after,
        "checkpoint roundtrip preserves outputs bit-identically",
        "forward outputs differ".into(),
    )
}

fn classic_exact_recovery() -> Result<()> {
    let map = sphere_normal_map(33)?;
    let brdf = Brdf::Lambertian { albedo: Albedo::Constant(0.7) };
    let sample: RenderedSample<f64> =
        render_sample(&map, &brdf, &rig()?, &RenderOptions::default())?;
    let estimate = l2_solve(&sample.images, &sample.lights, &map.mask)?;
    let mae = mean_angular_error_degrees(&estimate.normals, &map)?;
    check(
        mae < 1e-6,
        "least-squares recovery is exact on a noise-free sphere",
        format!("mae {mae} degrees"),
    )
}

fn gbr_leaves_renders_unchanged() -> Result<()> {
    let map = sphere_normal_map(17)?;
    let albedo = vec![0.65; map.pixels()];
    let lights = rig()?;
    let g = GbrMatrix { mu: 0.4, nu: -0.3, lambda: 1.7 };
    let (map2, albedo2, lights2) = gbr_transform(&map, &albedo, &lights, &g)?;
    let brdf1 = Brdf::Lambertian { albedo: Albedo::PerPixel(albedo) };
    let brdf2 = Brdf::Lambertian { albedo: Albedo::PerPixel(albedo2) };
    let opts = RenderOptions::default();
    let mut worst = 0.0f64;
    for (a, b) in lights.iter().zip(&lights2) {
        let ia: Tensor<f64> = render(&map, &brdf1, a, &opts)?;
        let ib: Tensor<f64> = render(&map2, &brdf2, b, &opts)?;
        for (x, y) in ia.to_vec().into_iter().zip(ib.to_vec()) {
            worst = worst.max((x - y).abs());
        }
    }
    check(
        worst < 1e-9,
        "bas-relief transformed scenes render identically",
        format!("max pixel difference {worst}"),
    )
}

fn normalization_cancels_albedo() -> Result<()> {
    let map = sphere_normal_map(17)?;
    let lights = rig()?;
    let opts = RenderOptions::default();
    // Render and normalize in double precision; albedo cancels to ~1e-16
    // there, so the single final cast lands on identical f32 bits.
    let mut stacks = Vec::new();
    for albedo in [0.3, 0.9] {
        let brdf = Brdf::Lambertian { albedo: Albedo::Constant(albedo) };
        let sample: RenderedSample<f64> = render_sample(&map, &brdf, &lights, &opts)?;
        let normalized = normalize_observations(&sample.images)?;
        let flat: Vec<u32> = normalized
            .iter()
            .flat_map(|t| t.to_vec())
            .map(|v| (v as f32).to_bits())
            .collect();
        stacks.push(flat);
    }
    check(
        stacks[0] == stacks[1],
        "observation normalization cancels albedo bit-identically",
        "normalized stacks differ".into(),
    )
}

fn grid_roundtrip_bound() -> Result<()> {
    let grid = LightingGrid::new(36, 20)?;
    // A lattice with fractional offsets lands inside bins, on edges, and
    // near corners alike.
    for i in 0..45 {
        for j in 0..25 {
            let phi = (i as f64 + 0.37) * (180.0 / 45.0);
            let theta = -90.0 + (j as f64 + 0.61) * (180.0 / 25.0);
            let l = photostereo_core::render::angles_to_direction(phi, theta);
            let (az, el) = grid.discretize_direction(l)?;
            let decoded = grid.decode_direction(az, el)?;
            let err = angular_error_degrees(l, decoded);
            let bound = grid.max_bin_error_degrees(az, el)? + 1e-9;
            if err > bound {
                bail!("[FAIL] grid roundtrip: {err} degrees exceeds bound {bound}");
            }
        }
    }
    println!("[PASS] direction grid roundtrip stays within the bin bound");
    Ok(())
}

fn metric_identities() -> Result<()> {
    let n = [0.6, 0.0, 0.8];
    let neg = [-0.6, 0.0, -0.8];
    let zero = angular_error_degrees(n, n);
    let opposite = angular_error_degrees(n, neg);
    let (_, re_scaled) = scale_invariant_intensity_error(&[2.0, 4.0], &[1.0, 2.0])?;
    let (s, re) = scale_invariant_intensity_error(&[1.0, 2.0], &[1.0, 1.0])?;
    let ok = zero == 0.0
        && opposite == 180.0
        && re_scaled == 0.0
        && (s - 0.6).abs() < 1e-12
        && (re - 0.3).abs() < 1e-12;
    check(
        ok,
        "metric identities hold exactly",
        format!("zero={zero} opposite={opposite} re_scaled={re_scaled} s={s} re={re}"),
    )
}

pub fn run_selftest() -> Result<()> {
    let scratch = Scratch::new()?;
    pfm_roundtrip(&scratch)?;
    lights_roundtrip(&scratch)?;
    checkpoint_roundtrip(&scratch)?;
    classic_exact_recovery()?;
    gbr_leaves_renders_unchanged()?;
    normalization_cancels_albedo()?;
    grid_roundtrip_bound()?;
    metric_identities()?;
    println!("all checks passed");
    Ok(())
}
