//! Dense and sparse complex linear algebra used by the solvers.
//!
//! Everything here is self-contained: a row-major dense matrix, LU
//! factorizations (dense and banded) with condition estimation, a CSR sparse
//! matrix and the matrix exponential.

mod band;
mod dense;
mod expm;
mod lu;
mod sparse;

pub use band::BandLu;
pub use dense::CMatrix;
pub use expm::{expm, expm_krylov_action, KrylovExpmOptions};
pub use lu::{DenseLu, Factorization};
pub use sparse::CsrMatrix;

use num_complex::Complex64;

pub type C64 = Complex64;

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[C64]) -> f64 {
    // scaled accumulation keeps huge/tiny vectors finite
    let scale = v.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v
        .iter()
        .map(|z| {
            let re = z.re / scale;
            let im = z.im / scale;
            re * re + im * im
        })
        .sum();
    scale * s.sqrt()
}

/// Hermitian inner product `sum conj(a_i) b_i`.
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Bilinear product `sum a_i b_i` (no conjugation).
pub fn dotu(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale_in_place(v: &mut [C64], s: C64) {
    for z in v.iter_mut() {
        *z *= s;
    }
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Pairwise summation in a fixed order; the result depends only on the
/// input order, never on scheduling.
pub fn pairwise_sum(v: &[C64]) -> C64 {
    match v.len() {
        0 => C64::new(0.0, 0.0),
        1 => v[0],
        n if n <= 8 => v.iter().fold(C64::new(0.0, 0.0), |a, b| a + b),
        n => {
            let (lo, hi) = v.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

pub fn pairwise_sum_real(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => {
            let (lo, hi) = v.split_at(n / 2);
            pairwise_sum_real(lo) + pairwise_sum_real(hi)
        }
    }
}

/// Complex Givens rotation `G = [[c, s], [-conj(s), c]]` with `G [f; g] = [r; 0]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Givens {
    pub c: f64,
    pub s: C64,
}

impl Givens {
    pub fn new(f: C64, g: C64) -> (Self, C64) {
        let gn = g.norm();
        if gn == 0.0 {
            return (Givens { c: 1.0, s: C64::new(0.0, 0.0) }, f);
        }
        let fn_ = f.norm();
        if fn_ == 0.0 {
            return (Givens { c: 0.0, s: g.conj() / gn }, C64::new(gn, 0.0));
        }
        let n = fn_.hypot(gn);
        let phase = f / fn_;
        let c = fn_ / n;
        let s = phase * g.conj() / n;
        (Givens { c, s }, phase * n)
    }

    /// Apply `G` to the pair `(x, y)` as a column.
    #[inline]
    pub fn apply(&self, x: C64, y: C64) -> (C64, C64) {
        (self.c * x + self.s * y, -self.s.conj() * x + self.c * y)
    }

    /// Apply `G^H` from the right to the row pair `(x, y)`.
    #[inline]
    pub fn apply_right_h(&self, x: C64, y: C64) -> (C64, C64) {
        (self.c * x + self.s.conj() * y, -self.s * x + self.c * y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn givens_zeroes_second_component() {
        let f = C64::new(0.3, -1.2);
        let g = C64::new(-2.0, 0.7);
        let (rot, r) = Givens::new(f, g);
        let (a, b) = rot.apply(f, g);
        assert!((a - r).norm() < 1e-14);
        assert!(b.norm() < 1e-14);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<C64> = (0..1000).map(|i| C64::new(i as f64, -(i as f64) * 0.5)).collect();
        let s = pairwise_sum(&v);
        assert_eq!(s, C64::new(499500.0, -249750.0));
    }

    #[test]
    fn norm2_is_scale_safe() {
        let v = vec![C64::new(1e200, 0.0), C64::new(0.0, 1e200)];
        assert!((norm2(&v) / 1e200 - 2f64.sqrt()).abs() < 1e-15);
    }
}
