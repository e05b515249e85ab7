use num_complex::Complex64 as C64;
use proptest::prelude::*;
use ruelle::assembly::assemble_flow_generator;
use ruelle::correlation::{correlation, evolve, evolve_grid, expansion_reconstruct, langevin_sample};
use ruelle::eigen::{dense_spectrum_with, DenseOptions};
use ruelle::models::TrigTerm;
use ruelle::{FlowField, FourierTruncation, McConfig, Observable, TrigPoly};

fn benchmark_observable(seed: u64) -> Observable {
    benchmark_observable_on(FourierTruncation::new(2, 5).unwrap(), seed)
}

fn benchmark_observable_on(t: FourierTruncation, seed: u64) -> Observable {
    let s = seed as f64;
    let p = TrigPoly::from_terms(
        2,
        &[
            TrigTerm::new(vec![0, 0], 0.3 + 0.1 * s, 0.0),
            TrigTerm::new(vec![1, 0], 1.0, 0.2 * s),
            TrigTerm::new(vec![1, -2], 0.1, -0.4),
            TrigTerm::new(vec![0, 3], 0.0, 0.5),
        ],
    )
    .unwrap();
    Observable::from_poly("f", t, &p).unwrap()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn mean_is_conserved_and_norm_contracts() {
    let t = FourierTruncation::new(2, 5).unwrap();
    let op = assemble_flow_generator(&FlowField::t2_benchmark(), 0.05, t).unwrap();
    let f = benchmark_observable(1);
    let times: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
    let grid = evolve_grid(&op, &f, &times).unwrap();
    let zero = t.index_of(&[0, 0]).unwrap();
    let mut prev = f64::INFINITY;
    for a in &grid {
        assert!((a[zero] - f.coefficients[zero]).norm() <= 1e-10);
        let n = norm(a);
        assert!(n <= prev + 1e-10);
        prev = n;
    }
}

#[test]
fn rotation_expansion_equals_semigroup() {
    let t = FourierTruncation::new(1, 16).unwrap();
    let op = assemble_flow_generator(&FlowField::rotation(), 0.1, t).unwrap();
    let rs = dense_spectrum_with(&op, &DenseOptions { left_vectors: true, ..Default::default() }).unwrap();
    let p = TrigPoly::from_terms(1, &[TrigTerm::new(vec![1], 1.0, 0.0)]).unwrap();
    let f = Observable::from_poly("cos", t, &p).unwrap();
    let times: Vec<f64> = (0..=80).map(|i| 0.25 * i as f64).collect();
    let rep = expansion_reconstruct(&op, &rs, &f, &f, &times, 5.0).unwrap();
    assert!(rep.max_abs_error <= 1e-9, "{:e}", rep.max_abs_error);
    for (tt, v) in times.iter().zip(&rep.reference.values) {
        let exact = 0.5 * (-0.1 * tt).exp() * tt.cos();
        assert!((v - C64::new(exact, 0.0)).norm() <= 1e-10);
    }
}

#[test]
fn full_expansion_is_exact_on_a_diagonalizable_truncation() {
    let t = FourierTruncation::new(2, 4).unwrap();
    let op = assemble_flow_generator(&FlowField::t2_benchmark(), 0.1, t).unwrap();
    let rs = dense_spectrum_with(&op, &DenseOptions { left_vectors: true, ..Default::default() }).unwrap();
    assert!(rs.defective.iter().all(|d| !d));
    let f = benchmark_observable_on(t, 2);
    let g = benchmark_observable_on(t, 3);
    let times: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
    let lowest = rs.eigenvalues.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
    let rep = expansion_reconstruct(&op, &rs, &f, &g, &times, -lowest + 1.0).unwrap();
    assert_eq!(rep.included.len(), rs.len());
    let scale = rep.reference.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(rep.max_abs_error <= 1e-8 * scale, "{:e}", rep.max_abs_error);
}

#[test]
fn mean_subtraction_removes_the_constant_mode() {
    let t = FourierTruncation::new(2, 5).unwrap();
    let op = assemble_flow_generator(&FlowField::t2_benchmark(), 0.1, t).unwrap();
    let f = benchmark_observable(0);
    let times = [0.0, 1.0, 2.0];
    let raw = correlation(&op, &f, &f, &times, false).unwrap();
    let centred = correlation(&op, &f, &f, &times, true).unwrap();
    let zero = t.index_of(&[0, 0]).unwrap();
    let c0 = f.coefficients[zero] * f.coefficients[zero];
    for (a, b) in raw.values.iter().zip(&centred.values) {
        assert!((a - b - c0).norm() <= 1e-12);
    }
}

#[test]
fn rotation_phase_variance_is_brownian() {
    let eps = 0.05;
    let f = Observable::closed_form("phase", |x: &[f64]| C64::from_polar(1.0, x[0]));
    let cfg = McConfig { dt: 1e-3, paths: 1000, seed: 11 };
    let est = langevin_sample(&FlowField::rotation(), eps, &[0.0], &f, &[1.0], &cfg).unwrap();
    // E[e^{iθ}] = e^{−it} e^{−Var/2}; Var = 2εt
    let m = est.mean[0].norm();
    let var = -2.0 * m.ln();
    let exact = 2.0 * eps;
    // delta-method standard error of −2 ln |mean|
    let se = 2.0 * est.stderr[0].norm() / m;
    assert!((var - exact).abs() <= 3.0 * se + 1e-12, "var {var} vs {exact} (se {se})");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn evolution_is_a_semigroup(s in 0.0f64..3.0, u in 0.0f64..3.0, seed in 0u64..4) {
        let t = FourierTruncation::new(2, 5).unwrap();
        let op = assemble_flow_generator(&FlowField::t2_benchmark(), 0.1, t).unwrap();
        let f = benchmark_observable(seed);
        let direct = evolve(&op, &f, s + u).unwrap();
        let composed = evolve(&op, &evolve(&op, &f, s).unwrap(), u).unwrap();
        let d = direct.coefficients.iter().zip(&composed.coefficients).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-10 * norm(&f.coefficients), "{:e}", d);
    }
}
