//! Independent oracles shared by the integration tests. Nothing here calls
//! the crate's eigensolvers or factorizations except where noted.
#![allow(dead_code)]

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruelle::eigen::schur;
use ruelle::CMatrix;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn random_matrix(n: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

/// Trace of `(zI − A)⁻¹` by Gauss–Jordan with partial pivoting.
fn resolvent_trace(a: &CMatrix, z: C64) -> C64 {
    let n = a.rows();
    let mut m: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|j| if i == j { z - a[(i, j)] } else { -a[(i, j)] }).collect()).collect();
    let mut inv: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect()).collect();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, p);
        inv.swap(col, p);
        let piv = m[col][col];
        for j in 0..n {
            m[col][j] /= piv;
            inv[col][j] /= piv;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != c(0.0, 0.0) {
                    for j in 0..n {
                        let (mc, ic) = (m[col][j], inv[col][j]);
                        m[r][j] -= f * mc;
                        inv[r][j] -= f * ic;
                    }
                }
            }
        }
    }
    (0..n).map(|i| inv[i][i]).sum()
}

/// Eigenvalues as roots of `det(zI − A)` by Aberth–Ehrlich iteration, using
/// `p'/p = tr (zI − A)⁻¹` so the characteristic polynomial is never formed.
pub fn aberth_eigenvalues(a: &CMatrix) -> Vec<C64> {
    let n = a.rows();
    let r = a.norm_fro() + 1.0;
    let mut z: Vec<C64> =
        (0..n).map(|j| C64::from_polar(r * 0.7, std::f64::consts::TAU * (j as f64 + 0.25) / n as f64)).collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let w = c(1.0, 0.0) / resolvent_trace(a, z[i]);
            let s: C64 = (0..n).filter(|&j| j != i).map(|j| c(1.0, 0.0) / (z[i] - z[j])).sum();
            let step = w / (c(1.0, 0.0) - w * s);
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * r {
            break;
        }
    }
    z
}

/// Optimal matching distance between two multisets of equal size, by
/// greedy nearest pairing (adequate for well-separated spectra).
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Spectral projector onto the eigenvalues selected by `inside`, from an
/// ordered Schur form `T = [[T11, T12], [0, T22]]` and the Sylvester
/// solution `T11 Y − Y T22 = T12`: `P = Z [[I, Y], [0, 0]] Zᴴ`.
/// Uses the crate's Schur decomposition, which is independent of the
/// contour quadrature under test.
pub fn schur_projector(a: &CMatrix, inside: impl Fn(C64) -> bool) -> CMatrix {
    let n = a.rows();
    let mut s = schur(a).expect("schur");
    let select: Vec<bool> = s.eigenvalues().into_iter().map(&inside).collect();
    let m = s.reorder(&select);
    let t = &s.t;
    // column j of Y: (T11 − t_jj) y_j = T12[:, j] + Σ_{l<j} y_l t_lj
    let q = n - m;
    let mut y = vec![vec![c(0.0, 0.0); m]; q];
    for j in 0..q {
        let tj = t[(m + j, m + j)];
        let mut rhs: Vec<C64> = (0..m).map(|i| t[(i, m + j)]).collect();
        for l in 0..j {
            let f = t[(m + l, m + j)];
            for i in 0..m {
                rhs[i] += y[l][i] * f;
            }
        }
        for i in (0..m).rev() {
            let mut acc = rhs[i];
            for k in i + 1..m {
                acc -= t[(i, k)] * y[j][k];
            }
            y[j][i] = acc / (t[(i, i)] - tj);
        }
    }
    let mut pt = CMatrix::zeros(n, n);
    for i in 0..m {
        pt[(i, i)] = c(1.0, 0.0);
        for j in 0..q {
            pt[(i, m + j)] = y[j][i];
        }
    }
    s.z.matmul(&pt).matmul(&s.z.conj_transpose())
}

pub fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.sub(b).max_abs()
}
