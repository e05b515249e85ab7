mod common;

use common::{c, max_entry_diff, random_matrix, schur_projector};
use ruelle::assembly::assemble_flow_generator;
use ruelle::eigen::{eig, DenseOptions};
use ruelle::projector::{contour_projector, eigenfunctions, projector_from_storage, DEFAULT_NODES};
use ruelle::{CMatrix, FlowField, FourierTruncation, Storage, C64};

/// Disc around eigenvalue `i` reaching half way to its nearest neighbour.
fn isolating_disc(values: &[C64], i: usize) -> (C64, f64) {
    let gap = values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, z)| (z - values[i]).norm()).fold(f64::INFINITY, f64::min);
    (values[i], 0.5 * gap)
}

#[test]
fn contour_projector_matches_schur_oracle_on_random_matrices() {
    for seed in 10..14 {
        let a = random_matrix(40, seed);
        let values = eig(&a, &DenseOptions::default()).unwrap().values;
        let storage = Storage::Dense(a.clone());
        // one isolated eigenvalue
        let (center, radius) = isolating_disc(&values, 3);
        let p = projector_from_storage(&storage, center, radius, 64).unwrap();
        let oracle = schur_projector(&a, |z| (z - center).norm() < radius);
        let d = max_entry_diff(&p.matrix, &oracle);
        assert!(d <= 1e-7, "seed {seed}: isolated disc differs by {d:e}");
        assert!((p.trace - c(1.0, 0.0)).norm() < 1e-8);
        // a disc around the origin holding several eigenvalues, radius in the
        // widest modulus gap near the middle of the spectrum
        let mut mods: Vec<f64> = values.iter().map(|z| z.norm()).collect();
        mods.sort_by(|x, y| x.total_cmp(y));
        let (k, _) = (8..32).map(|k| (k, mods[k + 1] - mods[k])).max_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        let r = 0.5 * (mods[k] + mods[k + 1]);
        // trapezoid error decays like q^M with q the worse of the two modulus ratios
        let q = (mods[k] / r).max(r / mods[k + 1]);
        let nodes = ((1e-13f64.ln() / q.ln()).ceil() as usize).max(64);
        let p = projector_from_storage(&storage, c(0.0, 0.0), r, nodes).unwrap();
        let oracle = schur_projector(&a, |z| z.norm() < r);
        let d = max_entry_diff(&p.matrix, &oracle);
        assert!(d <= 1e-7, "seed {seed}: {} eigenvalues inside, differs by {d:e}", k + 1);
        assert_eq!(p.rank_estimate, k + 1);
    }
}

#[test]
fn projectors_over_a_partition_sum_to_the_window_projector() {
    let a = random_matrix(30, 77);
    let values = eig(&a, &DenseOptions::default()).unwrap().values;
    let storage = Storage::Dense(a.clone());
    let discs: Vec<(C64, f64)> = [0usize, 5, 11].iter().map(|&i| isolating_disc(&values, i)).collect();
    let mut sum = CMatrix::zeros(30, 30);
    for &(center, radius) in &discs {
        sum = sum.add(&projector_from_storage(&storage, center, radius, 64).unwrap().matrix);
    }
    let oracle = schur_projector(&a, |z| discs.iter().any(|&(ctr, r)| (z - ctr).norm() < r));
    assert!(max_entry_diff(&sum, &oracle) <= 1e-7);
}

#[test]
fn rotation_mode_projector_quality() {
    let t = FourierTruncation::new(1, 16).unwrap();
    let op = assemble_flow_generator(&FlowField::rotation(), 0.01, t).unwrap();
    let center = c(2.0, -0.04);
    let p = contour_projector(&op, center, 0.5, DEFAULT_NODES).unwrap();
    assert!((p.trace - c(1.0, 0.0)).norm() <= 1e-8);
    assert!(p.idempotency_defect <= 1e-6);
    assert!(p.commutator_defect <= 1e-6);
    let doubled = contour_projector(&op, center, 0.5, 2 * DEFAULT_NODES).unwrap();
    assert!(max_entry_diff(&p.matrix, &doubled.matrix) <= 1e-9);
}

#[test]
fn eigenfunctions_of_a_nonnormal_generator() {
    let t = FourierTruncation::new(2, 5).unwrap();
    let op = assemble_flow_generator(&FlowField::t2_benchmark(), 0.1, t).unwrap();
    let m = op.to_dense();
    let values = eig(&m, &DenseOptions::default()).unwrap().values;
    // the slowest-decaying nonzero eigenvalue
    let i = (0..values.len()).filter(|&i| values[i].norm() > 1e-6).max_by(|&x, &y| values[x].im.total_cmp(&values[y].im)).unwrap();
    let (center, radius) = isolating_disc(&values, i);
    let p = contour_projector(&op, center, radius, 64).unwrap();
    let pairs = eigenfunctions(&op, &p).unwrap();
    assert_eq!(pairs.values.len(), p.rank_estimate);
    for (k, z) in pairs.values.iter().enumerate() {
        let u = &pairs.right[k];
        let w = &pairs.left[k];
        let mu = m.matvec(u);
        let res: f64 = mu.iter().zip(u).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-8 * m.norm_fro(), "right residual {res:e}");
        let wm = m.matvec_transpose(w);
        let res: f64 = wm.iter().zip(w).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt();
        let wn: f64 = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-8 * m.norm_fro() * wn, "left residual {res:e}");
        let pairing: C64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
        assert!((pairing - c(1.0, 0.0)).norm() <= 1e-8);
    }
}

