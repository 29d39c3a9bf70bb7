#[path = "common/gradcheck.rs"]
mod gradcheck;

use kedge_core::neural::{
    adam_step, init_network, mse_loss, train_denoising, AdamState, ArchKind, Gradients, Layer, Mode, Network,
    NetworkArch, Relu, TrainConfig,
};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gradcheck::{random_batch, randomize, sandwich, MAX_REL};

fn assert_case(case: &gradcheck::Case) {
    let checks = gradcheck::run_case(case);
    assert!(!checks.is_empty(), "{}: no coordinates checked", case.label);
    for c in &checks {
        assert!(
            c.rel_error < MAX_REL,
            "{}: layer {} block {} index {}: analytic {} numeric {} rel {}",
            case.label,
            c.layer,
            c.block,
            c.index,
            c.analytic,
            c.numeric,
            c.rel_error
        );
    }
}

fn assert_layer_cases(prefix: &str) {
    let cases: Vec<_> = gradcheck::layer_cases()
        .into_iter()
        .filter(|c| c.label.starts_with(prefix))
        .collect();
    assert!(!cases.is_empty());
    cases.iter().for_each(assert_case);
}

#[test]
fn gradients_dense() {
    assert_layer_cases("dense");
}

#[test]
fn gradients_conv1d() {
    assert_layer_cases("conv ");
}

#[test]
fn gradients_conv_transpose1d() {
    assert_layer_cases("convT");
}

#[test]
fn gradients_maxpool() {
    assert_layer_cases("maxpool");
}

#[test]
fn gradients_upsample() {
    assert_layer_cases("upsample");
}

#[test]
fn gradients_batchnorm() {
    assert_layer_cases("batchnorm");
}

#[test]
fn gradients_relu() {
    assert_layer_cases("relu");
}

#[test]
fn gradients_full_architectures() {
    gradcheck::architecture_cases().iter().for_each(assert_case);
}

/// Scalar Adam with bias correction, written out directly.
fn adam_oracle(theta0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    for (t, g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        theta -= lr * mh / (vh.sqrt() + eps);
    }
    theta
}

#[test]
fn adam_matches_scalar_oracle() {
    let mut net = sandwich(2, Layer::Relu(Relu { width: 2 }));
    let config = TrainConfig {
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let start: Vec<Vec<f64>> = net.params().iter().map(|p| p.to_vec()).collect();
    let mut state = AdamState::new(&net);
    let mut history: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..25 {
        let g = Gradients {
            blocks: start
                .iter()
                .map(|b| b.iter().map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        };
        adam_step(&mut net, &g, &mut state, &config).unwrap();
        history.push(g.blocks);
    }
    for (bi, block) in net.params().iter().enumerate() {
        for (i, &p) in block.iter().enumerate() {
            let gs: Vec<f64> = history.iter().map(|h| h[bi][i]).collect();
            let want = adam_oracle(start[bi][i], &gs, 0.01, config.beta1, config.beta2, config.epsilon);
            assert!((p - want).abs() < 1e-12, "block {bi} index {i}: {p} vs {want}");
        }
    }
}

#[test]
fn adam_rejects_mismatched_gradients() {
    let mut net = sandwich(2, Layer::Relu(Relu { width: 2 }));
    let mut state = AdamState::new(&net);
    let g = Gradients {
        blocks: vec![vec![0.0; 3]],
    };
    assert!(adam_step(&mut net, &g, &mut state, &TrainConfig::default()).is_err());
}

#[test]
fn mse_loss_oracle() {
    let p = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let t = Array2::from_shape_vec((2, 2), vec![0.0, 2.0, 5.0, 4.0]).unwrap();
    let (l, g) = mse_loss(p.view(), t.view()).unwrap();
    assert!((l - 1.25).abs() < 1e-15);
    assert_eq!(g.into_raw_vec_and_offset().0, vec![0.5, 0.0, -1.0, 0.0]);
}

#[test]
fn fcnn1_overfits_single_spectrum() {
    let arch = NetworkArch::new(ArchKind::Fcnn1, 26, 5);
    let mut net = init_network(&arch, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let row: Vec<f64> = (0..26).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Array2::from_shape_fn((64, 26), |(_, j)| row[j]);
    let config = TrainConfig {
        epochs: 100,
        batch_size: 16,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let h = train_denoising(&mut net, (x.view(), x.view()), (x.view(), x.view()), &config).unwrap();
    let first = h.train_loss[0];
    let last = *h.train_loss.last().unwrap();
    assert!(last * 10.0 <= first, "loss {first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let arch = NetworkArch::new(ArchKind::Fcnn2, 26, 5);
    let x = random_batch(40, 26, 3);
    let config = TrainConfig {
        epochs: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = init_network(&arch, 4).unwrap();
        let h = train_denoising(&mut net, (x.view(), x.view()), (x.view(), x.view()), &config).unwrap();
        (net, h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn eval_mode_rows_are_independent() {
    for kind in ArchKind::ALL {
        let arch = NetworkArch::new(kind, 26, 5);
        let mut net = init_network(&arch, 6).unwrap();
        let x = random_batch(6, 26, 10);
        net.forward(x.view(), Mode::Train).unwrap();
        let full = net.reconstruct(x.view()).unwrap();
        for i in 0..6 {
            let single = net.reconstruct(x.select(Axis(0), &[i]).view()).unwrap();
            for j in 0..26 {
                assert!((single[[0, j]] - full[[i, j]]).abs() < 1e-12, "{}", kind.name());
            }
        }
    }
}

#[test]
fn encode_then_decode_equals_reconstruct() {
    for kind in ArchKind::ALL {
        let mut net = init_network(&NetworkArch::new(kind, 26, 3), 2).unwrap();
        randomize(&mut net, 2);
        let x = random_batch(5, 26, 11);
        let code = net.encode(x.view()).unwrap();
        assert_eq!(code.dim(), (5, 3));
        let a = net.decode(code.view()).unwrap();
        let b = net.reconstruct(x.view()).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }
}

#[test]
fn network_json_round_trip() {
    for kind in ArchKind::ALL {
        let mut net = init_network(&NetworkArch::new(kind, 26, 5), 8).unwrap();
        net.forward(random_batch(8, 26, 1).view(), Mode::Train).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);
        let x = random_batch(3, 26, 2);
        assert_eq!(net.reconstruct(x.view()).unwrap(), back.reconstruct(x.view()).unwrap());
    }
}

#[test]
fn network_json_param_count_checked() {
    let net = init_network(&NetworkArch::new(ArchKind::Fcnn1, 26, 5), 8).unwrap();
    let mut v: serde_json::Value = serde_json::to_value(&net).unwrap();
    v["param_count"] = serde_json::json!(1);
    assert!(serde_json::from_value::<Network>(v).is_err());
}

#[test]
fn fcnn1_param_count() {
    let net = init_network(&NetworkArch::new(ArchKind::Fcnn1, 26, 5), 0).unwrap();
    assert_eq!(net.param_count(), (26 * 16 + 16) + (16 * 5 + 5) + (5 * 26 + 26));
}

#[test]
fn every_arch_handles_131_bins() {
    for kind in ArchKind::ALL {
        let net = init_network(&NetworkArch::new(kind, 131, 5), 0).unwrap();
        let out = net.reconstruct(random_batch(2, 131, 0).view()).unwrap();
        assert_eq!(out.dim(), (2, 131));
    }
}

#[test]
fn init_is_bounded_by_fan_in() {
    let net = init_network(&NetworkArch::new(ArchKind::Cnn2, 26, 5), 5).unwrap();
    for layer in net.layers() {
        if let (Some(fan_in), Layer::Dense(_) | Layer::Conv1d(_) | Layer::ConvTranspose1d(_)) = (layer.fan_in(), layer)
        {
            let bound = (6.0 / fan_in as f64).sqrt();
            assert!(layer.params()[0].iter().all(|w| w.abs() <= bound));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_output_gradient_gives_zero_grads(seed in 0u64..1000, kind_idx in 0usize..6) {
        let kind = ArchKind::ALL[kind_idx];
        let mut net = init_network(&NetworkArch::new(kind, 26, 5), seed).unwrap();
        let x = random_batch(3, 26, seed);
        let (_, cache) = net.forward(x.view(), Mode::Train).unwrap();
        let g = net.backward(&cache, Array2::zeros((3, 26)).view()).unwrap();
        prop_assert!(g.blocks.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn init_is_seed_deterministic(seed in 0u64..10_000, kind_idx in 0usize..6) {
        let arch = NetworkArch::new(ArchKind::ALL[kind_idx], 26, 5);
        prop_assert_eq!(init_network(&arch, seed).unwrap(), init_network(&arch, seed).unwrap());
    }
}
