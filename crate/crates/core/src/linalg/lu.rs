use super::{CMatrix, C64};

/// A factorized square matrix that can solve with itself and its conjugate
/// transpose.
pub trait Factorization: Send + Sync {
    fn dim(&self) -> usize;

    /// Solve `A x = b`.
    fn solve(&self, b: &[C64]) -> Vec<C64>;

    /// Solve `A^H x = b`.
    fn solve_conj_transpose(&self, b: &[C64]) -> Vec<C64>;

    /// True when an exactly zero pivot was met.
    fn is_singular(&self) -> bool;

    /// 1-norm of the factored matrix.
    fn norm_one(&self) -> f64;

    /// Estimate of the 1-norm condition number (Hager/Higham estimator).
    fn condition_estimate(&self) -> f64 {
        if self.is_singular() {
            return f64::INFINITY;
        }
        let inv = inverse_norm_one_est(self);
        if !inv.is_finite() {
            return f64::INFINITY;
        }
        self.norm_one() * inv
    }
}

fn sign(z: C64) -> C64 {
    let n = z.norm();
    if n == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z / n
    }
}

fn inverse_norm_one_est<F: Factorization + ?Sized>(f: &F) -> f64 {
    let n = f.dim();
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for iter in 0..5 {
        let y = f.solve(&x);
        let y1: f64 = y.iter().map(|z| z.norm()).sum();
        if !y1.is_finite() {
            return f64::INFINITY;
        }
        if iter > 0 && y1 <= est {
            break;
        }
        est = y1;
        let xi: Vec<C64> = y.iter().map(|&z| sign(z)).collect();
        let z = f.solve_conj_transpose(&xi);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = vec![C64::new(0.0, 0.0); n];
        x[j] = C64::new(1.0, 0.0);
    }
    // alternating test vector guards against the estimator's blind spots
    let alt: Vec<C64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            C64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
        })
        .collect();
    let y = f.solve(&alt);
    let alt_est = 2.0 * y.iter().map(|z| z.norm()).sum::<f64>() / (3.0 * n as f64);
    est.max(alt_est)
}

/// Dense LU with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct DenseLu {
    lu: CMatrix,
    perm: Vec<usize>,
    singular: bool,
    norm_one: f64,
}

impl DenseLu {
    pub fn new(a: &CMatrix) -> Self {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.rows();
        let norm_one = a.norm_one();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if pmax == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let piv = lu[(k, k)];
            let (head, tail) = lu.as_mut_slice().split_at_mut((k + 1) * n);
            let krow = &head[k * n..(k + 1) * n];
            for row in tail.chunks_mut(n) {
                let l = row[k] / piv;
                row[k] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..n {
                    row[j] -= l * krow[j];
                }
            }
        }
        DenseLu { lu, perm, singular, norm_one }
    }

    pub fn min_pivot(&self) -> f64 {
        self.lu.diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
    }
}

impl Factorization for DenseLu {
    fn dim(&self) -> usize {
        self.lu.rows()
    }

    fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: C64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: C64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    fn solve_conj_transpose(&self, b: &[C64]) -> Vec<C64> {
        // A^H = U^H L^H P, so solve U^H y = b, L^H z = y, x = P^T z
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            y[i] /= self.lu[(i, i)].conj();
            let yi = y[i];
            let row = self.lu.row(i);
            for j in i + 1..n {
                y[j] -= row[j].conj() * yi;
            }
        }
        for i in (0..n).rev() {
            let yi = y[i];
            let row = self.lu.row(i);
            for j in 0..i {
                y[j] -= row[j].conj() * yi;
            }
        }
        let mut x = vec![C64::new(0.0, 0.0); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    fn is_singular(&self) -> bool {
        self.singular
    }

    fn norm_one(&self) -> f64 {
        self.norm_one
    }
}
