//! Temporary budget probes, run explicitly with --ignored.

use photostereo_core::lcnet::{HeadMode, Lcnet, LcnetConfig};
use photostereo_core::psfcn::{InputMode, Psfcn, PsfcnConfig};
use photostereo_core::train::{
    generate_dataset, lcnet_eval_metrics, psfcn_eval_mae, train_lcnet, train_psfcn, DatasetSpec,
    EvalSet, PsfcnLightSource, SceneMix, TrainConfig,
};

#[test]
#[ignore]
fn probe_lighting_shifted() {
    let data =
        generate_dataset(&DatasetSpec { count: 200, resolution: 32, ..DatasetSpec::default() })
            .unwrap();
    let blended = generate_dataset(&DatasetSpec {
        mix: SceneMix::BlendedSpheres,
        count: 50,
        resolution: 32,
        seed: 19,
        ..DatasetSpec::default()
    })
    .unwrap();
    let width: f64 = std::env::var("PROBE_WIDTH").ok().and_then(|v| v.parse().ok()).unwrap_or(0.5);
    let tc = TrainConfig {
        epochs: 20,
        batch_size: 4,
        initial_lr: 2e-3,
        q_per_sample: 8,
        noise_amplitude: 0.025,
        seed: 7,
        eval_per_epoch: true,
        eval_q: 16,
        intensity_loss_weight: 1.0,
    };
    for head in [HeadMode::Classification, HeadMode::Regression] {
        let net = Lcnet::<f32>::build(
            LcnetConfig {
                width_multiplier: width,
                input_size: 32,
                head_mode: head,
                ..LcnetConfig::default()
            },
            43,
        )
        .unwrap();
        train_lcnet(&net, &data, &tc, |s| {
            let shifted = lcnet_eval_metrics(&net, &blended, 16, 7, EvalSet::All).unwrap();
            println!(
                "{head:?} epoch {} val dir {:?} re {:?} | blended dir {:.3} re {:.4}",
                s.epoch,
                s.val_mae_degrees,
                s.val_intensity_re,
                shifted.direction_mae_degrees,
                shifted.intensity_relative_error
            );
        })
        .unwrap();
    }
}

#[test]
#[ignore]
fn probe_estimated_light_budget() {
    let data =
        generate_dataset(&DatasetSpec { count: 200, resolution: 32, ..DatasetSpec::default() })
            .unwrap();
    let fresh = generate_dataset(&DatasetSpec {
        count: 100,
        resolution: 32,
        seed: 23,
        ..DatasetSpec::default()
    })
    .unwrap();
    let lcnet_epochs: usize =
        std::env::var("PROBE9_LCNET_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let lcnet_tc = TrainConfig {
        epochs: lcnet_epochs,
        batch_size: 4,
        initial_lr: 2e-3,
        q_per_sample: 8,
        noise_amplitude: 0.025,
        seed: 7,
        eval_per_epoch: false,
        ..TrainConfig::default()
    };
    let lighting = Lcnet::<f32>::build(
        LcnetConfig {
            width_multiplier: 0.25,
            input_size: 32,
            head_mode: HeadMode::Classification,
            ..LcnetConfig::default()
        },
        43,
    )
    .unwrap();
    train_lcnet(&lighting, &data, &lcnet_tc, |_| {}).unwrap();
    let lm = lcnet_eval_metrics(&lighting, &fresh, 16, 7, EvalSet::All).unwrap();
    println!(
        "lighting on fresh: dir {:.3} re {:.4}",
        lm.direction_mae_degrees, lm.intensity_relative_error
    );

    let epochs: usize =
        std::env::var("PROBE9_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let tc = TrainConfig {
        epochs,
        batch_size: 4,
        initial_lr: 2e-3,
        q_per_sample: 16,
        noise_amplitude: 0.025,
        seed: 7,
        eval_per_epoch: false,
        ..TrainConfig::default()
    };
    let build = || {
        Psfcn::<f32>::build(
            PsfcnConfig { width_multiplier: 0.25, input_mode: InputMode::Calibrated, train_q: 16 },
            41,
        )
        .unwrap()
    };
    let plain = build();
    train_psfcn(&plain, &data, PsfcnLightSource::GroundTruth, &tc, |s| {
        println!("plain epoch {} loss {:.4}", s.epoch, s.mean_loss);
    })
    .unwrap();
    let adapted = build();
    train_psfcn(&adapted, &data, PsfcnLightSource::Estimated(&lighting), &tc, |s| {
        println!("adapted epoch {} loss {:.4}", s.epoch, s.mean_loss);
    })
    .unwrap();

    for (name, net) in [("plain", &plain), ("adapted", &adapted)] {
        let hold = psfcn_eval_mae(
            net,
            &data,
            16,
            PsfcnLightSource::Estimated(&lighting),
            7,
            EvalSet::Holdout,
        )
        .unwrap();
        let gen =
            psfcn_eval_mae(net, &fresh, 16, PsfcnLightSource::Estimated(&lighting), 7, EvalSet::All)
                .unwrap();
        let gt = psfcn_eval_mae(net, &fresh, 16, PsfcnLightSource::GroundTruth, 7, EvalSet::All)
            .unwrap();
        println!("{name}: holdout {hold:.4} fresh-estimated {gen:.4} fresh-true {gt:.4}");
    }
}

#[test]
#[ignore]
fn probe_normalized_budget() {
    let data =
        generate_dataset(&DatasetSpec { count: 200, resolution: 32, ..DatasetSpec::default() })
            .unwrap();
    let blended = generate_dataset(&DatasetSpec {
        mix: SceneMix::BlendedSpheres,
        count: 100,
        resolution: 32,
        seed: 29,
        ..DatasetSpec::default()
    })
    .unwrap();
    let epochs: usize =
        std::env::var("PROBE10_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(6);
    let tc = TrainConfig {
        epochs,
        batch_size: 4,
        initial_lr: 2e-3,
        q_per_sample: 16,
        noise_amplitude: 0.025,
        seed: 7,
        eval_per_epoch: true,
        eval_q: 16,
        ..TrainConfig::default()
    };
    for (name, mode) in
        [("calibrated", InputMode::Calibrated), ("normalized", InputMode::Normalized)]
    {
        let net = Psfcn::<f32>::build(
            PsfcnConfig { width_multiplier: 0.25, input_mode: mode, train_q: 16 },
            41,
        )
        .unwrap();
        train_psfcn(&net, &data, PsfcnLightSource::GroundTruth, &tc, |s| {
            let gen =
                psfcn_eval_mae(&net, &blended, 16, PsfcnLightSource::GroundTruth, 7, EvalSet::All)
                    .unwrap();
            println!(
                "{name} epoch {} loss {:.4} val {:?} blended {gen:.4}",
                s.epoch, s.mean_loss, s.val_mae_degrees
            );
        })
        .unwrap();
    }
}
