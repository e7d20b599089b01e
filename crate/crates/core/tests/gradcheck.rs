//! Finite-difference verification of every differentiable operation.
//!
//! Each case builds a scalar loss from parameter leaves, runs the engine's
//! backward pass once, then perturbs every parameter element with central
//! differences and compares. The comparison is relative:
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.

use photostereo_core::rng::rng_from_seed;
use photostereo_core::tensor::{
    abs, add, affine, concat, conv2d, cosine_loss, deconv2d, l2_normalize_channels,
    l2_normalize_rows, leaky_relu, linear, max_fuse, mean, mul, repeat_rows, reshape,
    softmax_cross_entropy, softplus, sub, sum,
};
use photostereo_core::Tensor;
use rand::Rng as _;

fn rand_vec(rng: &mut photostereo_core::rng::Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random constant with the same shape, used to give reductions an
/// asymmetric weighting so transposed or misrouted gradients can't cancel.
fn project(x: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let mut rng = rng_from_seed(seed);
    let r = Tensor::new(x.shape(), rand_vec(&mut rng, x.numel(), -1.0, 1.0)).unwrap();
    sum(&mul(x, &r).unwrap()).unwrap()
}

fn gradcheck(params: &[Tensor<f64>], tol: f64, build: impl Fn(&[Tensor<f64>]) -> Tensor<f64>) {
    for p in params {
        p.zero_grad();
    }
    let loss = build(params);
    loss.backward().unwrap();
    let grads: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let x0 = p.to_vec()[j];
            let h = 1e-5 * x0.abs().max(1.0);
            p.update_values(|v| v[j] = x0 + h);
            let fp = build(params).item().unwrap();
            p.update_values(|v| v[j] = x0 - h);
            let fm = build(params).item().unwrap();
            p.update_values(|v| v[j] = x0);
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads[pi][j];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            assert!(
                rel <= tol,
                "param {pi} element {j}: analytic {analytic} vs numeric {numeric} (rel {rel})"
            );
        }
    }
}

#[test]
fn elementwise_chain() {
    let mut rng = rng_from_seed(101);
    let a = Tensor::param(&[2, 3], rand_vec(&mut rng, 6, 0.2, 1.5)).unwrap();
    let b = Tensor::param(&[2, 3], rand_vec(&mut rng, 6, -1.5, -0.2)).unwrap();
    gradcheck(&[a, b], 1e-3, |ps| {
        let s = add(&ps[0], &ps[1]).unwrap();
        let d = sub(&ps[0], &ps[1]).unwrap();
        let m = mul(&s, &d).unwrap();
        let t = affine(&m, 0.7, -0.3);
        project(&abs(&t), 1)
    });
}

#[test]
fn reductions_and_shaping() {
    let mut rng = rng_from_seed(102);
    let a = Tensor::param(&[2, 3], rand_vec(&mut rng, 6, -1.0, 1.0)).unwrap();
    let b = Tensor::param(&[1, 3], rand_vec(&mut rng, 3, -1.0, 1.0)).unwrap();
    gradcheck(&[a, b], 1e-3, |ps| {
        let joined = concat(&[ps[0].clone(), ps[1].clone()], 0).unwrap();
        let wide = concat(&[joined.clone(), joined], 1).unwrap();
        let tiled = repeat_rows(&reshape(&wide, &[18]).unwrap(), 2).unwrap();
        let m = mean(&tiled).unwrap();
        let s = project(&tiled, 2);
        add(&affine(&m, 0.5, 0.0), &s).unwrap()
    });
}

#[test]
fn conv_stride1_padded() {
    let mut rng = rng_from_seed(103);
    let x = Tensor::param(&[2, 5, 5], rand_vec(&mut rng, 50, -1.0, 1.0)).unwrap();
    let w = Tensor::param(&[3, 2, 3, 3], rand_vec(&mut rng, 54, -0.5, 0.5)).unwrap();
    let b = Tensor::param(&[3], rand_vec(&mut rng, 3, -0.5, 0.5)).unwrap();
    gradcheck(&[x, w, b], 1e-3, |ps| {
        project(&conv2d(&ps[0], &ps[1], &ps[2], 1, 1).unwrap(), 3)
    });
}

#[test]
fn conv_stride2_batched() {
    let mut rng = rng_from_seed(104);
    let x = Tensor::param(&[2, 1, 4, 4], rand_vec(&mut rng, 32, -1.0, 1.0)).unwrap();
    let w = Tensor::param(&[2, 1, 3, 3], rand_vec(&mut rng, 18, -0.5, 0.5)).unwrap();
    let b = Tensor::param(&[2], rand_vec(&mut rng, 2, -0.5, 0.5)).unwrap();
    gradcheck(&[x, w, b], 1e-3, |ps| {
        project(&conv2d(&ps[0], &ps[1], &ps[2], 2, 1).unwrap(), 4)
    });
}

#[test]
fn deconv_upsampling() {
    let mut rng = rng_from_seed(105);
    let x = Tensor::param(&[2, 3, 3], rand_vec(&mut rng, 18, -1.0, 1.0)).unwrap();
    let w = Tensor::param(&[2, 3, 4, 4], rand_vec(&mut rng, 96, -0.5, 0.5)).unwrap();
    let b = Tensor::param(&[3], rand_vec(&mut rng, 3, -0.5, 0.5)).unwrap();
    gradcheck(&[x, w, b], 1e-3, |ps| {
        project(&deconv2d(&ps[0], &ps[1], &ps[2], 2).unwrap(), 5)
    });
}

#[test]
fn deconv_stride1() {
    let mut rng = rng_from_seed(106);
    let x = Tensor::param(&[1, 3, 3], rand_vec(&mut rng, 9, -1.0, 1.0)).unwrap();
    let w = Tensor::param(&[1, 2, 3, 3], rand_vec(&mut rng, 18, -0.5, 0.5)).unwrap();
    let b = Tensor::param(&[2], rand_vec(&mut rng, 2, -0.5, 0.5)).unwrap();
    gradcheck(&[x, w, b], 1e-3, |ps| {
        project(&deconv2d(&ps[0], &ps[1], &ps[2], 1).unwrap(), 6)
    });
}

#[test]
fn activations() {
    // Values kept away from the leaky kink at zero; softplus covers both
    // overflow-guard branches.
    let x = Tensor::param(&[6], vec![-3.0, -0.9, -0.1, 0.2, 1.4, 25.0]).unwrap();
    gradcheck(std::slice::from_ref(&x), 1e-3, |ps| {
        let l = leaky_relu(&ps[0], 0.1);
        let s = softplus(&ps[0]);
        add(&project(&l, 7), &project(&s, 8)).unwrap()
    });
}

#[test]
fn fully_connected() {
    let mut rng = rng_from_seed(107);
    let x = Tensor::param(&[2, 3], rand_vec(&mut rng, 6, -1.0, 1.0)).unwrap();
    let w = Tensor::param(&[4, 3], rand_vec(&mut rng, 12, -0.5, 0.5)).unwrap();
    let b = Tensor::param(&[4], rand_vec(&mut rng, 4, -0.5, 0.5)).unwrap();
    gradcheck(&[x, w, b], 1e-3, |ps| {
        project(&linear(&ps[0], &ps[1], &ps[2]).unwrap(), 9)
    });
}

#[test]
fn channel_normalization() {
    let mut rng = rng_from_seed(108);
    // healthy norms, far from the eps switch
    let x = Tensor::param(&[3, 2, 2], rand_vec(&mut rng, 12, 0.3, 1.0)).unwrap();
    gradcheck(std::slice::from_ref(&x), 1e-3, |ps| {
        project(&l2_normalize_channels(&ps[0], 1e-12).unwrap(), 10)
    });
}

#[test]
fn channel_normalization_below_eps_is_linear() {
    // With eps larger than every norm the map is x/eps.
    let x = Tensor::param(&[3, 1, 1], vec![0.01, -0.02, 0.015]).unwrap();
    gradcheck(std::slice::from_ref(&x), 1e-3, |ps| {
        project(&l2_normalize_channels(&ps[0], 0.5).unwrap(), 11)
    });
}

#[test]
fn row_normalization() {
    let mut rng = rng_from_seed(109);
    let x = Tensor::param(&[3, 4], rand_vec(&mut rng, 12, 0.2, 1.2)).unwrap();
    gradcheck(std::slice::from_ref(&x), 1e-3, |ps| {
        project(&l2_normalize_rows(&ps[0], 1e-12).unwrap(), 12)
    });
}

#[test]
fn order_free_pooling() {
    // Values spaced so no tie flips within the finite-difference step.
    let a = Tensor::param(&[2, 2], vec![0.9, -0.4, 0.2, 0.7]).unwrap();
    let b = Tensor::param(&[2, 2], vec![0.1, 0.5, -0.6, 0.3]).unwrap();
    let c = Tensor::param(&[2, 2], vec![0.5, -0.9, 0.8, -0.2]).unwrap();
    gradcheck(&[a, b, c], 1e-3, |ps| {
        project(&max_fuse(ps).unwrap(), 13)
    });
}

#[test]
fn classification_loss() {
    let mut rng = rng_from_seed(110);
    let logits = Tensor::param(&[3, 7], rand_vec(&mut rng, 21, -2.0, 2.0)).unwrap();
    gradcheck(std::slice::from_ref(&logits), 1e-3, |ps| {
        softmax_cross_entropy(&ps[0], &[1, 0, 6]).unwrap()
    });
}

#[test]
fn direction_loss_through_normalization() {
    let mut rng = rng_from_seed(111);
    let pred = Tensor::param(&[3, 2, 2], rand_vec(&mut rng, 12, 0.2, 1.0)).unwrap();
    let gt_raw = Tensor::new(&[3, 2, 2], rand_vec(&mut rng, 12, 0.2, 1.0)).unwrap();
    let gt = l2_normalize_channels(&gt_raw, 1e-12).unwrap();
    let mask = [true, false, true, true];
    gradcheck(std::slice::from_ref(&pred), 1e-3, move |ps| {
        let unit = l2_normalize_channels(&ps[0], 1e-12).unwrap();
        cosine_loss(&unit, &gt, &mask).unwrap()
    });
}

#[test]
fn small_network_end_to_end() {
    // conv (stride 1) -> leaky -> conv (stride 2) -> leaky -> deconv
    // (stride 2) -> unit normals -> cosine loss: the same layer types the
    // real models chain together.
    let mut rng = rng_from_seed(112);
    let x = Tensor::new(&[2, 4, 4], rand_vec(&mut rng, 32, 0.0, 1.0)).unwrap();
    let w1 = Tensor::param(&[4, 2, 3, 3], rand_vec(&mut rng, 72, -0.3, 0.3)).unwrap();
    let b1 = Tensor::param(&[4], rand_vec(&mut rng, 4, -0.1, 0.1)).unwrap();
    let w2 = Tensor::param(&[4, 4, 3, 3], rand_vec(&mut rng, 144, -0.3, 0.3)).unwrap();
    let b2 = Tensor::param(&[4], rand_vec(&mut rng, 4, -0.1, 0.1)).unwrap();
    let w3 = Tensor::param(&[4, 3, 4, 4], rand_vec(&mut rng, 192, -0.3, 0.3)).unwrap();
    let b3 = Tensor::param(&[3], rand_vec(&mut rng, 3, -0.1, 0.1)).unwrap();
    let gt_raw = Tensor::new(&[3, 4, 4], rand_vec(&mut rng, 48, 0.2, 1.0)).unwrap();
    let gt = l2_normalize_channels(&gt_raw, 1e-12).unwrap();
    let mask: Vec<bool> = (0..16).map(|i| i % 3 != 0).collect();
    gradcheck(&[w1, b1, w2, b2, w3, b3], 1e-2, move |ps| {
        let h1 = leaky_relu(&conv2d(&x, &ps[0], &ps[1], 1, 1).unwrap(), 0.1);
        let h2 = leaky_relu(&conv2d(&h1, &ps[2], &ps[3], 2, 1).unwrap(), 0.1);
        let up = deconv2d(&h2, &ps[4], &ps[5], 2).unwrap();
        let unit = l2_normalize_channels(&up, 1e-12).unwrap();
        cosine_loss(&unit, &gt, &mask).unwrap()
    });
}

#[test]
fn full_normal_network() {
    // The entire normal-estimation model at 1/16 width on 4x4 inputs:
    // shared extractor, order-free fusion, regression head, channel
    // normalization, cosine loss. Seeds are fixed so no pre-activation
    // sits close enough to the leaky kink to flip inside the step.
    use photostereo_core::psfcn::{InputMode, Psfcn, PsfcnConfig};
    use photostereo_core::render::DirectionalLight;

    let mut rng = rng_from_seed(113);
    let config = PsfcnConfig {
        width_multiplier: 1.0 / 16.0,
        input_mode: InputMode::Calibrated,
        train_q: 2,
    };
    let net = Psfcn::<f64>::build(config, 31).unwrap();
    let images: Vec<Tensor<f64>> = (0..2)
        .map(|_| Tensor::new(&[3, 4, 4], rand_vec(&mut rng, 48, 0.05, 1.0)).unwrap())
        .collect();
    let lights = vec![
        DirectionalLight::from_angles(70.0, 20.0, 1.0).unwrap(),
        DirectionalLight::from_angles(115.0, -10.0, 1.0).unwrap(),
    ];
    let gt_raw = Tensor::new(&[3, 4, 4], rand_vec(&mut rng, 48, 0.2, 1.0)).unwrap();
    let gt = l2_normalize_channels(&gt_raw, 1e-12).unwrap();
    let mask: Vec<bool> = (0..16).map(|i| i != 5).collect();
    let params: Vec<Tensor<f64>> = net.params().into_iter().map(|(_, t)| t).collect();
    gradcheck(&params, 1e-2, move |_| {
        let out = net.forward(&images, Some(&lights)).unwrap();
        cosine_loss(&out, &gt, &mask).unwrap()
    });
}

#[test]
fn full_lighting_network_classification() {
    // The entire lighting-estimation model at 1/16 width on 4x4 inputs
    // with the classification heads and their combined cross entropy.
    use photostereo_core::lcnet::{lighting_loss, HeadMode, Lcnet, LcnetConfig};
    use photostereo_core::render::DirectionalLight;

    let mut rng = rng_from_seed(114);
    let config = LcnetConfig {
        width_multiplier: 1.0 / 16.0,
        input_size: 4,
        head_mode: HeadMode::Classification,
        ..LcnetConfig::default()
    };
    let net = Lcnet::<f64>::build(config, 33).unwrap();
    let images: Vec<Tensor<f64>> = (0..2)
        .map(|_| Tensor::new(&[3, 4, 4], rand_vec(&mut rng, 48, 0.05, 1.0)).unwrap())
        .collect();
    let mut mask_vals = vec![1.0; 16];
    mask_vals[3] = 0.0;
    mask_vals[12] = 0.0;
    let mask = Tensor::new(&[1, 4, 4], mask_vals).unwrap();
    let targets = vec![
        DirectionalLight::from_angles(80.0, 30.0, 0.9).unwrap(),
        DirectionalLight::from_angles(100.0, -20.0, 1.6).unwrap(),
    ];
    let grid = net.config.grid;
    let params: Vec<Tensor<f64>> = net.params().into_iter().map(|(_, t)| t).collect();
    gradcheck(&params, 1e-2, move |_| {
        let out = net.forward(&images, &mask).unwrap();
        lighting_loss(&out, &targets, &grid, 1.0).unwrap()
    });
}

#[test]
fn full_lighting_network_regression() {
    // Same model with the regression heads: unit direction vectors via
    // row normalization, positive intensities via softplus, and the
    // cosine-plus-relative-error loss.
    use photostereo_core::lcnet::{lighting_loss, HeadMode, Lcnet, LcnetConfig};
    use photostereo_core::render::DirectionalLight;

    let mut rng = rng_from_seed(115);
    let config = LcnetConfig {
        width_multiplier: 1.0 / 16.0,
        input_size: 4,
        head_mode: HeadMode::Regression,
        ..LcnetConfig::default()
    };
    let net = Lcnet::<f64>::build(config, 35).unwrap();
    let images: Vec<Tensor<f64>> = (0..2)
        .map(|_| Tensor::new(&[3, 4, 4], rand_vec(&mut rng, 48, 0.05, 1.0)).unwrap())
        .collect();
    let mask = Tensor::new(&[1, 4, 4], vec![1.0; 16]).unwrap();
    let targets = vec![
        DirectionalLight::from_angles(60.0, 10.0, 1.0).unwrap(),
        DirectionalLight::from_angles(130.0, -35.0, 1.3).unwrap(),
    ];
    let grid = net.config.grid;
    let params: Vec<Tensor<f64>> = net.params().into_iter().map(|(_, t)| t).collect();
    gradcheck(&params, 1e-2, move |_| {
        let out = net.forward(&images, &mask).unwrap();
        lighting_loss(&out, &targets, &grid, 0.7).unwrap()
    });
}
