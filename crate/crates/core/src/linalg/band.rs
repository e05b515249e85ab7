use super::{CsrMatrix, Factorization, C64};

/// Banded LU with partial pivoting (LINPACK layout: row interchanges are
/// applied to the right-hand side one elimination step at a time).
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` columns
/// hold the fill produced by pivoting.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
    piv: Vec<usize>,
    singular: bool,
    norm_one: f64,
}

impl BandLu {
    /// Factor `A - shift I` where `A` is sparse.
    pub fn from_csr_shifted(a: &CsrMatrix, shift: C64) -> Self {
        assert_eq!(a.rows(), a.cols(), "band LU needs a square matrix");
        let n = a.rows();
        let (kl, ku) = a.bandwidths();
        // the shift touches the diagonal, which is always inside the band
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            width,
            data: vec![C64::new(0.0, 0.0); n * width],
            piv: vec![0; n],
            singular: false,
            norm_one: 0.0,
        };
        let mut colsum = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row_entries(i) {
                *lu.at_mut(i, j) += v;
            }
            *lu.at_mut(i, i) -= shift;
        }
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                colsum[j] += lu.at(i, j).norm();
            }
        }
        lu.norm_one = colsum.into_iter().fold(0.0, f64::max);
        lu.factor();
        lu
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    fn factor(&mut self) {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let mut p = k;
            let mut pmax = -1.0;
            for i in k..=last_row {
                let v = self.at(i, k).norm();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            self.piv[k] = p;
            if pmax == 0.0 {
                self.singular = true;
                continue;
            }
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let l = self.at(i, k) / pivot;
                *self.at_mut(i, k) = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.at(k, j);
                    *self.at_mut(i, j) -= l * u;
                }
            }
        }
    }
}

impl Factorization for BandLu {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                x[i] -= self.at(i, k) * xk;
            }
        }
        let reach = self.ku + self.kl;
        for i in (0..n).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..=(i + reach).min(n - 1) {
                s += self.at(i, j) * x[j];
            }
            x[i] = (x[i] - s) / self.at(i, i);
        }
        x
    }

    fn solve_conj_transpose(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let reach = self.ku + self.kl;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for j in i.saturating_sub(reach)..i {
                s += self.at(j, i).conj() * y[j];
            }
            y[i] = (y[i] - s) / self.at(i, i).conj();
        }
        for k in (0..n).rev() {
            let mut s = C64::new(0.0, 0.0);
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s += self.at(i, k).conj() * y[i];
            }
            y[k] -= s;
            y.swap(k, self.piv[k]);
        }
        y
    }

    fn is_singular(&self) -> bool {
        self.singular
    }

    fn norm_one(&self) -> f64 {
        self.norm_one
    }
}
