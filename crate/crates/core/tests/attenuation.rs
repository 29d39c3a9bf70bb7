#[path = "common/data.rs"]
mod data;

use kedge_core::attenuation::{
    fit_pcb, has_k_edge_in, klein_nishina, lac_on_grid, load_attenuation_table, load_densities, pcb_design,
    upward_jumps, AttenuationTable, EnergyGrid, Spectrum, DEFAULT_PHOTOELECTRIC_EXPONENT,
};
use kedge_core::eval::nmse;
use kedge_core::Error;
use ndarray::Array1;
use proptest::prelude::*;

fn densities() -> Vec<(u8, String, f64)> {
    load_densities(&data::elements_dir().join("densities.csv")).unwrap()
}

#[test]
fn three_row_aluminium_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z13.csv");
    std::fs::write(&path, "energy_kev,mac_cm2_per_g\n20.0,3.44\n50.0,0.368\n100.0,0.170\n").unwrap();
    let t = load_attenuation_table(&path, &densities()).unwrap();
    assert_eq!(t.z, 13);
    assert_eq!(t.samples.len(), 3);
    assert_eq!(t.density, 2.699);
}

#[test]
fn vendored_density_matches_table() {
    let text = std::fs::read_to_string(data::elements_dir().join("densities.csv")).unwrap();
    let al = text.lines().find(|l| l.starts_with("13,")).unwrap();
    let listed: f64 = al.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(data::library().get(13).unwrap().density, listed);
}

#[test]
fn unsorted_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z13.csv");
    std::fs::write(&path, "energy_kev,mac_cm2_per_g\n50.0,0.368\n20.0,3.44\n").unwrap();
    assert!(matches!(
        load_attenuation_table(&path, &densities()),
        Err(Error::Validation(_))
    ));
}

#[test]
fn malformed_row_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z13.csv");
    std::fs::write(&path, "energy_kev,mac_cm2_per_g\n20.0,abc\n").unwrap();
    assert!(matches!(
        load_attenuation_table(&path, &densities()),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn iodine_edge_preserved() {
    let lib = data::library();
    let iodine = lib.get(53).unwrap();
    let i = iodine
        .samples
        .windows(2)
        .position(|w| w[0].0 == w[1].0 && (w[0].0 - 33.169).abs() < 0.01)
        .expect("duplicated K-edge row");
    assert!(iodine.samples[i + 1].1 > iodine.samples[i].1);
    assert!((iodine.k_edge().unwrap() - 33.169).abs() < 0.01);
}

#[test]
fn iodine_jump_between_bracketing_bins() {
    let lib = data::library();
    let grid = EnergyGrid::default_26();
    let s = lac_on_grid(lib.get(53).unwrap(), &grid).unwrap();
    let jumps = upward_jumps(&s.values);
    assert_eq!(jumps.len(), 1);
    let c = grid.centers();
    assert!(c[jumps[0]] < 33.169 && c[jumps[0] + 1] > 33.169);
    // values equal direct evaluation of the table at the centers
    let t = lib.get(53).unwrap();
    for (v, e) in s.values.iter().zip(c) {
        assert_eq!(*v, t.density * t.mac_at(*e).unwrap());
    }
}

#[test]
fn jump_counts_for_all_elements() {
    let lib = data::library();
    let grid = EnergyGrid::default_26();
    let c = grid.centers();
    for t in lib.tables() {
        let s = lac_on_grid(t, &grid).unwrap();
        let jumps = upward_jumps(&s.values).len();
        let visible = t.k_edge().is_some_and(|k| k > c[0] && k < c[c.len() - 1]);
        if t.z <= 42 {
            assert!(!has_k_edge_in(t, &grid), "Z={}", t.z);
            assert_eq!(jumps, 0, "Z={}", t.z);
        } else if visible {
            assert_eq!(jumps, 1, "Z={}", t.z);
        } else {
            assert_eq!(jumps, 0, "Z={}", t.z);
        }
    }
}

#[test]
fn integer_grid_shows_k_edges_and_heavy_l_edges() {
    let lib = data::library();
    let grid = EnergyGrid::integer_131();
    for t in lib.tables() {
        let s = lac_on_grid(t, &grid).unwrap();
        let c = grid.centers();
        let jumps = upward_jumps(&s.values);
        let at_k = |i: &usize| t.k_edge().is_some_and(|k| c[*i] < k && c[*i + 1] > k);
        let k_visible = t.k_edge().is_some_and(|k| k > c[0] && k < c[c.len() - 1]);
        assert_eq!(
            jumps.iter().filter(|i| at_k(i)).count(),
            k_visible as usize,
            "Z={}",
            t.z
        );
        // Th, Pa and U also show L-edges just above 20 keV
        let others = jumps.iter().filter(|i| !at_k(i)).count();
        assert!(
            others == 0 || (t.z >= 90 && jumps.iter().all(|&i| at_k(&i) || c[i] < 22.0)),
            "Z={}",
            t.z
        );
    }
}

#[test]
fn k_edge_class_is_z_above_42() {
    let lib = data::library();
    let k = lib.k_edge_elements(&EnergyGrid::default_26());
    assert_eq!(k, (43..=92).collect::<Vec<u8>>());
}

#[test]
fn klein_nishina_oracles() {
    assert!((klein_nishina(0.1).unwrap() - 4.0 / 3.0).abs() < 1e-3);
    let want = 20.0 / 9.0 - 1.5 * 3f64.ln();
    assert!((klein_nishina(511.0).unwrap() - want).abs() < 1e-9);
    assert!(klein_nishina(20.0).unwrap() > klein_nishina(150.0).unwrap());
    assert!(matches!(klein_nishina(0.0), Err(Error::Domain(_))));
}

#[test]
fn klein_nishina_decreasing_on_centers() {
    let c = EnergyGrid::default_26().centers().to_vec();
    for w in c.windows(2) {
        assert!(klein_nishina(w[0]).unwrap() > klein_nishina(w[1]).unwrap());
    }
}

#[test]
fn pcb_fits_aluminium_better_than_iodine() {
    let lib = data::library();
    let grid = EnergyGrid::default_26();
    let err = |z: u8| {
        let s = lac_on_grid(lib.get(z).unwrap(), &grid).unwrap();
        let (_, fit) = fit_pcb(&s, &grid, DEFAULT_PHOTOELECTRIC_EXPONENT).unwrap();
        nmse(Array1::from(s.values).view(), Array1::from(fit.values).view()).unwrap()
    };
    let al = err(13);
    assert!(al <= 1e-2, "Al NMSE {al}");
    assert!(err(53) > al);
}

#[test]
fn pcb_residual_orthogonal_to_basis() {
    let lib = data::library();
    let grid = EnergyGrid::default_26();
    let design = pcb_design(&grid, DEFAULT_PHOTOELECTRIC_EXPONENT).unwrap();
    for z in [6u8, 13, 26, 53, 82] {
        let s = lac_on_grid(lib.get(z).unwrap(), &grid).unwrap();
        let (_, fit) = fit_pcb(&s, &grid, DEFAULT_PHOTOELECTRIC_EXPONENT).unwrap();
        let y = Array1::from(s.values.clone());
        let r = &y - &Array1::from(fit.values);
        for j in 0..2 {
            let col = design.column(j);
            let scale = col.dot(&col).sqrt() * y.dot(&y).sqrt();
            assert!(col.dot(&r).abs() < 1e-8 * scale, "Z={z} column {j}");
        }
    }
}

fn scaled(t: &AttenuationTable, c: f64) -> AttenuationTable {
    AttenuationTable::new(t.z, t.symbol.clone(), t.density * c, t.samples.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lac_scales_with_density(z in 1u8..=92, c in 0.01f64..100.0) {
        let lib = data::library();
        let grid = EnergyGrid::default_26();
        let t = lib.get(z).unwrap();
        let a = lac_on_grid(t, &grid).unwrap();
        let b = lac_on_grid(&scaled(t, c), &grid).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((y - c * x).abs() <= 1e-12 * (c * x).abs());
        }
    }

    #[test]
    fn interpolation_exact_at_samples(z in 1u8..=92, pick in 0usize..1000) {
        let lib = data::library();
        let t = lib.get(z).unwrap();
        let i = pick % t.samples.len();
        let (e, m) = t.samples[i];
        let is_edge = t.samples.iter().filter(|s| s.0 == e).count() > 1;
        let got = t.mac_at(e).unwrap();
        if is_edge {
            // at an edge energy the post-edge branch applies
            let post = t.samples.iter().rev().find(|s| s.0 == e).unwrap().1;
            prop_assert!((got - post).abs() <= 1e-12 * post);
        } else {
            prop_assert!((got - m).abs() <= 1e-12 * m);
        }
    }

    #[test]
    fn log_log_midpoint(e1 in 1.0f64..100.0, ratio in 1.01f64..10.0, m1 in 1e-3f64..1e3, m2 in 1e-3f64..1e3) {
        let e2 = e1 * ratio;
        let t = AttenuationTable::new(13, "Al", 2.699, vec![(e1, m1), (e2, m2)]).unwrap();
        let got = t.mac_at((e1 * e2).sqrt()).unwrap();
        let want = (m1 * m2).sqrt();
        prop_assert!((got - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn pcb_physical_only(v in proptest::collection::vec(0.1f64..10.0, 26)) {
        let grid = EnergyGrid::default_26();
        let s = Spectrum { values: v, units: kedge_core::attenuation::Units::Standardized };
        prop_assert!(fit_pcb(&s, &grid, 3.0).is_err());
    }
}
