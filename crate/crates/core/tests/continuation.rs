use num_complex::Complex64 as C64;
use ruelle::assembly::assemble_flow_generator;
use ruelle::continuation::{default_schedule, gap_diagnostic, parabola_count, sweep, SweepOptions};
use ruelle::eigen::dense_spectrum;
use ruelle::{BranchStatus, FlowField, FourierTruncation, KPolicy, SpectralSystem, Window};

fn window() -> Window {
    Window::new(-4.5, 4.5, -1.0, 0.1).unwrap()
}

#[test]
fn rotation_branches_extrapolate_to_integers() {
    let sys = SpectralSystem::Flow(FlowField::rotation());
    let res = sweep(&sys, &default_schedule(), window(), &SweepOptions::default()).unwrap();
    let mut limits: Vec<f64> = Vec::new();
    for b in res.branches.iter().filter(|b| b.status == BranchStatus::Converged) {
        let z = b.extrapolated.unwrap();
        assert!((z.re - z.re.round()).abs() <= 1e-8 && z.im.abs() <= 1e-8, "limit {z}");
        assert!(b.residual_of_fit <= 1e-10);
        limits.push(z.re.round());
    }
    limits.sort_by(|a, b| a.total_cmp(b));
    assert_eq!(limits, (-4..=4).map(|k| k as f64).collect::<Vec<_>>());
    let counts = res.window_counts();
    let n = counts.len();
    assert_eq!(counts[n - 1].1, counts[n - 2].1);
    let gap = gap_diagnostic(&res, 1.0, 0.1, 4.5);
    assert_eq!(gap.strip_count_limits, 0);
    assert!(gap.strip_zero_and_stable);
}

#[test]
fn translation_limits_and_damping() {
    let b = 2f64.sqrt();
    let sys = SpectralSystem::Flow(FlowField::translation(1.0, b));
    let opts = SweepOptions { k_policy: KPolicy::Fixed(6), ..Default::default() };
    let res = sweep(&sys, &default_schedule(), window(), &opts).unwrap();
    let mut found_one_plus_root2 = false;
    for br in res.branches.iter().filter(|br| br.status == BranchStatus::Converged) {
        let z = br.extrapolated.unwrap();
        let best = (-6i64..=6)
            .flat_map(|j| (-6i64..=6).map(move |m| (j as f64 + b * m as f64, j, m)))
            .min_by(|p, q| (p.0 - z.re).abs().total_cmp(&(q.0 - z.re).abs()))
            .unwrap();
        assert!((best.0 - z.re).abs() <= 1e-8 && z.im.abs() <= 1e-8, "limit {z}");
        found_one_plus_root2 |= best.1 == 1 && best.2 == 1;
        // Im λ(ε) = −ε|k|² decreases as ε grows
        for w in br.values.windows(2) {
            assert!(w[0].im <= w[1].im + 1e-12);
        }
    }
    assert!(found_one_plus_root2);
    let counts = res.window_counts();
    let n = counts.len();
    assert_eq!(counts[n - 1].1, counts[n - 2].1);
}

#[test]
fn sweeps_are_deterministic() {
    let sys = SpectralSystem::Flow(FlowField::t2_benchmark());
    let opts = SweepOptions { k_policy: KPolicy::Fixed(6), ..Default::default() };
    let sched = [0.2, 0.1, 0.05];
    let a = sweep(&sys, &sched, window(), &opts).unwrap();
    let b = sweep(&sys, &sched, window(), &opts).unwrap();
    assert_eq!(a.branches, b.branches);
}

fn in_window(w: &Window, z: &[C64]) -> Vec<C64> {
    z.iter().cloned().filter(|z| w.contains(*z)).collect()
}

#[test]
fn truncation_consistency_and_parabola_count_on_benchmark() {
    let f = FlowField::t2_benchmark();
    let eps = 0.1;
    let c0 = 10.0 * f.speed_bound().unwrap();
    let w = Window::new(-2.0, 2.0, -0.6, 0.1).unwrap();
    let spec = |k: usize| dense_spectrum(&assemble_flow_generator(&f, eps, FourierTruncation::new(2, k).unwrap()).unwrap()).unwrap();
    let (a, b) = (spec(8), spec(12));
    let wa = in_window(&w, &a.eigenvalues);
    let wb = in_window(&w, &b.eigenvalues);
    assert_eq!(wa.len(), wb.len());
    for z in &wa {
        let d = wb.iter().map(|y| (z - y).norm()).fold(f64::INFINITY, f64::min);
        assert!(d <= 1e-6, "{z} moved by {d:e}");
    }
    assert_eq!(parabola_count(&a, eps, c0), parabola_count(&b, eps, c0));
}
