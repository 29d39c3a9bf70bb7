#[path = "common/data.rs"]
mod data;

use kedge_core::attenuation::{has_k_edge_in, EnergyGrid};
use kedge_core::synth::{
    build_dataset, read_dataset, sample_mixture, split_dataset, write_dataset, DatasetSpec, ElementClasses, KEdgeRule,
    StandardizationStats,
};
use ndarray::Axis;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec(name: &str, n_elements: usize, n_objects: usize, rule: KEdgeRule, seed: u64) -> DatasetSpec {
    DatasetSpec {
        name: name.into(),
        n_elements,
        n_objects,
        k_edge_rule: rule,
        grid: EnergyGrid::default_26(),
        noise_sigma: 0.1,
        seed,
    }
}

#[test]
fn same_seed_same_dataset() {
    let lib = data::library();
    let s = spec("D3E", 3, 200, KEdgeRule::Unconstrained, 5);
    let a = build_dataset(&s, &lib, None).unwrap();
    let b = build_dataset(&s, &lib, None).unwrap();
    assert_eq!(a, b);
    let c = build_dataset(&DatasetSpec { seed: 6, ..s }, &lib, None).unwrap();
    assert_ne!(a.clean, c.clean);
}

#[test]
fn rows_do_not_depend_on_dataset_size() {
    let lib = data::library();
    let small = build_dataset(&spec("a", 2, 10, KEdgeRule::Unconstrained, 3), &lib, None).unwrap();
    let large = build_dataset(&spec("a", 2, 50, KEdgeRule::Unconstrained, 3), &lib, None).unwrap();
    assert_eq!(small.mixtures[..], large.mixtures[..10]);
}

#[test]
fn noise_has_requested_std() {
    let lib = data::library();
    let d = build_dataset(&spec("D2E", 2, 20000, KEdgeRule::Unconstrained, 1), &lib, None).unwrap();
    let noise = &d.noisy - &d.clean;
    let n = noise.len() as f64;
    let mean = noise.sum() / n;
    let std = (noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((0.098..=0.102).contains(&std), "noise std {std}");
    assert!(mean.abs() < 2e-3);
}

#[test]
fn zero_noise_keeps_clean() {
    let lib = data::library();
    let s = DatasetSpec {
        noise_sigma: 0.0,
        ..spec("c", 2, 20, KEdgeRule::Unconstrained, 1)
    };
    let d = build_dataset(&s, &lib, None).unwrap();
    assert_eq!(d.clean, d.noisy);
}

#[test]
fn standardized_columns() {
    let lib = data::library();
    let d = build_dataset(&spec("D2E", 2, 500, KEdgeRule::Unconstrained, 2), &lib, None).unwrap();
    for col in d.clean.axis_iter(Axis(1)) {
        let m = col.mean().unwrap();
        let s = col.std(0.0);
        assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
    }
    assert!(d.stats.std.iter().all(|s| *s > 0.0));
    let phys = d.physical_clean().unwrap();
    let lac = lib.lac_matrix(&d.spec.grid).unwrap();
    for (row, mix) in phys.rows().into_iter().zip(&d.mixtures) {
        let mut want = ndarray::Array1::<f64>::zeros(row.len());
        for &(z, w) in &mix.components {
            want.scaled_add(w, &lac.row(z as usize - 1));
        }
        for (a, b) in row.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}

#[test]
fn external_stats_are_used() {
    let lib = data::library();
    let base = build_dataset(&spec("D2E", 2, 300, KEdgeRule::Unconstrained, 2), &lib, None).unwrap();
    let other = build_dataset(
        &spec("D3E_1K", 3, 50, KEdgeRule::Exactly(1), 9),
        &lib,
        Some(&base.stats),
    )
    .unwrap();
    assert_eq!(other.stats, base.stats);
    let bad = StandardizationStats::identity(131);
    assert!(build_dataset(&spec("x", 2, 5, KEdgeRule::Unconstrained, 1), &lib, Some(&bad)).is_err());
}

#[test]
fn split_sizes_for_20000() {
    let lib = data::library();
    let d = build_dataset(&spec("D2E", 2, 20000, KEdgeRule::Unconstrained, 4), &lib, None).unwrap();
    let s = split_dataset(&d, (0.72, 0.2, 0.08), 4).unwrap();
    assert_eq!((s.train.n_rows(), s.val.n_rows(), s.test.n_rows()), (14400, 4000, 1600));
    let mut all: Vec<usize> = s
        .indices
        .train
        .iter()
        .chain(&s.indices.val)
        .chain(&s.indices.test)
        .copied()
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..20000).collect::<Vec<_>>());
    assert_eq!(s.test.clean.row(0), d.clean.row(s.indices.test[0]));
}

#[test]
fn k_edge_rule_respected() {
    let lib = data::library();
    let grid = EnergyGrid::default_26();
    for (n, k) in [(3, 0), (3, 1), (3, 2), (3, 3), (5, 5)] {
        let d = build_dataset(&spec("k", n, 200, KEdgeRule::Exactly(k), 8), &lib, None).unwrap();
        for mix in &d.mixtures {
            assert_eq!(mix.components.len(), n);
            let kc = mix
                .components
                .iter()
                .filter(|(z, _)| has_k_edge_in(lib.get(*z).unwrap(), &grid))
                .count();
            assert_eq!(kc, k);
            mix.validate().unwrap();
        }
    }
}

#[test]
fn unsatisfiable_rules_rejected() {
    let lib = data::library();
    assert!(build_dataset(&spec("k", 2, 10, KEdgeRule::Exactly(3), 1), &lib, None).is_err());
    assert!(build_dataset(&spec("k", 6, 10, KEdgeRule::Unconstrained, 1), &lib, None).is_err());
    assert!(build_dataset(&spec("k", 2, 0, KEdgeRule::Unconstrained, 1), &lib, None).is_err());
}

#[test]
fn write_read_round_trip() {
    let lib = data::library();
    let d = build_dataset(&spec("D3E_2K", 3, 40, KEdgeRule::Exactly(2), 12), &lib, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&d, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(d, back);
}

#[test]
fn missing_dataset_dir_is_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(read_dataset(&dir.path().join("nope")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_mixtures_valid(seed in any::<u64>(), n in 1usize..=5, k in 0usize..=5) {
        let lib = data::library();
        let classes = ElementClasses::new(&lib, &EnergyGrid::default_26());
        let k = k.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = sample_mixture(&mut rng, n, KEdgeRule::Exactly(k), &classes).unwrap();
        prop_assert!(mix.validate().is_ok());
        prop_assert_eq!(mix.components.iter().filter(|(z, _)| classes.k_edge.contains(z)).count(), k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(mix, sample_mixture(&mut rng, n, KEdgeRule::Exactly(k), &classes).unwrap());
    }

    #[test]
    fn standardize_round_trip(seed in any::<u64>()) {
        let lib = data::library();
        let d = build_dataset(&spec("p", 2, 30, KEdgeRule::Unconstrained, seed), &lib, None).unwrap();
        let phys = d.physical_clean().unwrap();
        for (p, c) in phys.rows().into_iter().zip(d.clean.rows()) {
            let s = d.stats.standardize(p).unwrap();
            prop_assert!(s.iter().zip(c.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }
}
