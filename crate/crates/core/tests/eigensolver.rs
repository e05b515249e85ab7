mod common;

use common::{aberth_eigenvalues, c, multiset_distance, random_matrix};
use proptest::prelude::*;
use ruelle::assembly::{assemble_flow_generator, assemble_flow_generator_with};
use ruelle::eigen::{dense_spectrum, eig, shift_invert_arnoldi, DenseOptions};
use ruelle::models::TrigTerm;
use ruelle::{AssemblyOptions, FlowField, FourierTruncation, StoragePolicy, C64};

#[test]
fn dense_eigenvalues_match_characteristic_roots() {
    for seed in 0..4 {
        let a = random_matrix(12, seed);
        let e = eig(&a, &DenseOptions::default()).unwrap();
        let oracle = aberth_eigenvalues(&a);
        let d = multiset_distance(&e.values, &oracle);
        assert!(d < 1e-10, "seed {seed}: distance {d:e}");
    }
}

#[test]
fn rotation_spectrum_both_viscosities() {
    let t = FourierTruncation::new(1, 16).unwrap();
    for eps in [0.1, 0.01] {
        let rs = dense_spectrum(&assemble_flow_generator(&FlowField::rotation(), eps, t).unwrap()).unwrap();
        assert_eq!(rs.len(), 33);
        let exact: Vec<C64> = (-16i64..=16).map(|k| c(k as f64, -eps * (k * k) as f64)).collect();
        assert!(multiset_distance(&rs.eigenvalues, &exact) <= 1e-10);
    }
}

#[test]
fn translation_damping_is_exactly_quadratic() {
    let t = FourierTruncation::new(2, 4).unwrap();
    let b = 2f64.sqrt();
    for eps in [0.2, 0.05, 0.0125] {
        let rs = dense_spectrum(&assemble_flow_generator(&FlowField::translation(1.0, b), eps, t).unwrap()).unwrap();
        let exact: Vec<C64> =
            t.modes().map(|k| c(k[0] as f64 + b * k[1] as f64, -eps * (k[0] * k[0] + k[1] * k[1]) as f64)).collect();
        assert!(multiset_distance(&rs.eigenvalues, &exact) <= 1e-10);
    }
}

#[test]
fn sparse_and_dense_storage_agree_under_shift_invert() {
    let f = FlowField::t2_benchmark();
    let t = FourierTruncation::new(2, 6).unwrap();
    let dense = assemble_flow_generator(&f, 0.1, t).unwrap();
    let sparse = assemble_flow_generator_with(
        &f,
        0.1,
        t,
        &AssemblyOptions { storage: StoragePolicy::Sparse, ..Default::default() },
    )
    .unwrap();
    let shift = c(0.4, -0.3);
    let a = shift_invert_arnoldi(&dense, shift, 6, 1e-11).unwrap();
    let b = shift_invert_arnoldi(&sparse, shift, 6, 1e-11).unwrap();
    let full = dense_spectrum(&dense).unwrap();
    for z in a.eigenvalues.iter().chain(&b.eigenvalues) {
        let (_, d) = full.nearest(*z).unwrap();
        assert!(d <= 1e-7, "{z} is {d:e} from the dense spectrum");
    }
}

fn field_strategy() -> impl Strategy<Value = FlowField> {
    let term = (-1i64..=1, -1i64..=1, -0.5f64..0.5, -0.5f64..0.5).prop_map(|(a, b, p, q)| TrigTerm::new(vec![a, b], p, q));
    let component = (-1.0f64..1.0, prop::collection::vec(term, 1..3)).prop_map(|(c0, mut ts)| {
        ts.push(TrigTerm::new(vec![0, 0], c0, 0.0));
        ts
    });
    (component.clone(), component).prop_map(|(a, b)| FlowField::torus("random", 2, &[a, b]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn spectrum_is_reflection_symmetric(field in field_strategy(), eps in 0.05f64..0.3) {
        let t = FourierTruncation::new(2, 5).unwrap();
        let rs = dense_spectrum(&assemble_flow_generator(&field, eps, t).unwrap()).unwrap();
        let vecs = rs.right_vectors.as_ref().unwrap();
        for (z, v) in rs.eigenvalues.iter().zip(vecs) {
            if t.boundary_mass(v, 0) >= 0.01 {
                continue;
            }
            let (_, d) = rs.nearest(-z.conj()).unwrap();
            prop_assert!(d <= 1e-8, "{} has no partner (distance {:e})", z, d);
        }
    }

    #[test]
    fn imaginary_parts_bounded_by_half_divergence(field in field_strategy(), eps in 0.0f64..0.3) {
        let t = FourierTruncation::new(2, 5).unwrap();
        let rs = dense_spectrum(&assemble_flow_generator(&field, eps, t).unwrap()).unwrap();
        let bound = field.max_half_divergence().unwrap();
        for z in &rs.eigenvalues {
            prop_assert!(z.im <= bound + 1e-8, "Im {} exceeds {}", z, bound);
        }
    }

    #[test]
    fn shift_invert_results_lie_in_dense_spectrum(field in field_strategy(), sr in -1.0f64..1.0, si in -0.5f64..0.0) {
        let t = FourierTruncation::new(2, 4).unwrap();
        let op = assemble_flow_generator(&field, 0.1, t).unwrap();
        let full = dense_spectrum(&op).unwrap();
        let part = shift_invert_arnoldi(&op, c(sr, si), 5, 1e-11).unwrap();
        for z in &part.eigenvalues {
            let (_, d) = full.nearest(*z).unwrap();
            prop_assert!(d <= 1e-7, "{} is {:e} from the dense spectrum", z, d);
        }
    }
}
