//! Eigenvalues of truncated operators.
//!
//! Dense route: Householder reduction to Hessenberg form followed by the
//! single-shift complex QR iteration, giving a Schur form `A = Z T Z^H`.
//! Eigenvectors come from back-substitution on `T`. Large sparse route:
//! Krylov–Schur on `(M − σ)^{-1}` with thick restarts.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{FourierTruncation, OperatorMatrix, Storage};
use crate::linalg::{dotc, norm2, BandLu, CMatrix, DenseLu, Factorization, Givens, C64};
use crate::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Closed rectangle in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let w = Window { re_min, re_max, im_min, im_max };
        if ![re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) || re_min > re_max || im_min > im_max {
            return Err(Error::arg(format!("window {w:?} is not a bounded rectangle")));
        }
        Ok(w)
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverInfo {
    Dense,
    Arnoldi { shift: C64, krylov_dim: usize },
}

/// Eigenvalues of one operator with certification data.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceSet {
    pub eigenvalues: Vec<C64>,
    pub right_vectors: Option<Vec<Vec<C64>>>,
    /// Vectors with `wᵀ M = λ wᵀ` (bilinear, unconjugated), when requested.
    pub left_vectors: Option<Vec<Vec<C64>>>,
    /// `‖(M − λ)v‖ / ‖M‖` with `‖M‖ = sqrt(‖M‖₁ ‖M‖_∞)`.
    pub residuals: Vec<f64>,
    /// Member of a numerically defective cluster.
    pub defective: Vec<bool>,
    pub tolerance: f64,
    pub epsilon: f64,
    pub truncation: Option<FourierTruncation>,
    pub solver: SolverInfo,
    pub window: Option<Window>,
}

impl ResonanceSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keep only eigenvalues inside `w`.
    pub fn restrict(&self, w: Window) -> ResonanceSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| w.contains(self.eigenvalues[i])).collect();
        let pick = |v: &Option<Vec<Vec<C64>>>| v.as_ref().map(|v| keep.iter().map(|&i| v[i].clone()).collect());
        ResonanceSet {
            eigenvalues: keep.iter().map(|&i| self.eigenvalues[i]).collect(),
            right_vectors: pick(&self.right_vectors),
            left_vectors: pick(&self.left_vectors),
            residuals: keep.iter().map(|&i| self.residuals[i]).collect(),
            defective: keep.iter().map(|&i| self.defective[i]).collect(),
            window: Some(w),
            ..self.clone()
        }
    }

    /// Index and distance of the eigenvalue nearest `z`.
    pub fn nearest(&self, z: C64) -> Option<(usize, f64)> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| (i, (l - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// CSV with a `#` header line carrying ε, K, solver and shift.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.truncation.map(|t| t.k_max.to_string()).unwrap_or_else(|| "none".into());
        let solver = match self.solver {
            SolverInfo::Dense => "solver=dense shift=none".to_string(),
            SolverInfo::Arnoldi { shift, krylov_dim } => {
                format!("solver=arnoldi shift={:.16e}{:+.16e}i krylov_dim={krylov_dim}", shift.re, shift.im)
            }
        };
        writeln!(w, "# epsilon={:.16e} K={k} {solver}", self.epsilon)?;
        writeln!(w, "re,im,residual,defect_flag")?;
        for i in 0..self.len() {
            let l = self.eigenvalues[i];
            writeln!(w, "{:.16e},{:.16e},{:.16e},{}", l.re, l.im, self.residuals[i], u8::from(self.defective[i]))?;
        }
        Ok(())
    }
}

/// Descending imaginary part, ties by ascending real part.
pub fn resonance_order(a: &C64, b: &C64) -> Ordering {
    b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re))
}

// ---------------------------------------------------------------------------
// Dense Schur decomposition

/// `A = Z T Z^H` with `T` upper triangular and `Z` unitary.
#[derive(Clone, Debug)]
pub struct Schur {
    pub t: CMatrix,
    pub z: CMatrix,
}

/// Householder reduction `A = Q H Q^H`, `H` upper Hessenberg.
pub fn hessenberg(a: &CMatrix) -> (CMatrix, CMatrix) {
    assert!(a.is_square());
    let n = a.rows();
    let mut h = a.clone();
    let mut q = CMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xn = norm2(&x);
        if xn == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 { C64::new(1.0, 0.0) } else { x[0] / x[0].norm() };
        let alpha = -phase * xn;
        let mut v = x;
        v[0] -= alpha;
        let beta: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if beta == 0.0 {
            continue;
        }
        let f = 2.0 / beta;
        for j in k..n {
            let s: C64 = v.iter().enumerate().map(|(l, vl)| vl.conj() * h[(k + 1 + l, j)]).sum();
            let s = s * f;
            for (l, vl) in v.iter().enumerate() {
                h[(k + 1 + l, j)] -= s * vl;
            }
        }
        for mat in [&mut h, &mut q] {
            for i in 0..n {
                let row = mat.row_mut(i);
                let s: C64 = v.iter().enumerate().map(|(l, vl)| row[k + 1 + l] * vl).sum();
                let s = s * f;
                for (l, vl) in v.iter().enumerate() {
                    row[k + 1 + l] -= s * vl.conj();
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    // eigenvalue of [[a, b], [c, d]] closest to d
    let tr_half = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (tr_half * tr_half - det).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Schur decomposition by the implicitly shifted complex QR iteration.
pub fn schur(a: &CMatrix) -> Result<Schur> {
    if !a.is_square() {
        return Err(Error::arg("Schur decomposition needs a square matrix"));
    }
    if a.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::arg("matrix has non-finite entries"));
    }
    let n = a.rows();
    let (mut h, mut z) = hessenberg(a);
    if n <= 1 {
        return Ok(Schur { t: h, z });
    }
    let eps = f64::EPSILON;
    let norm = h.max_abs().max(f64::MIN_POSITIVE);
    let max_iter = 30 * n;
    let mut total = 0usize;
    let mut iter = 0usize;
    let mut hi = n - 1;
    while hi > 0 {
        // locate the active block [l, hi]
        let mut l = hi;
        while l > 0 {
            let sub = h[(l, l - 1)].norm();
            let mut s = h[(l, l)].norm() + h[(l - 1, l - 1)].norm();
            if s == 0.0 {
                s = norm;
            }
            if sub <= eps * s || sub <= 1e-300 {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_iter {
            let partial = (hi + 1..n).map(|i| h[(i, i)]).collect();
            return Err(Error::NoConvergence {
                message: format!("QR iteration did not converge within {max_iter} sweeps"),
                partial,
            });
        }
        let sigma = if iter % 10 == 0 {
            // exceptional shift breaks cycles
            h[(hi, hi)] + 0.75 * h[(hi, hi - 1)].re.abs()
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };
        for k in l..hi {
            let (x, y) = if k == l { (h[(l, l)] - sigma, h[(l + 1, l)]) } else { (h[(k, k - 1)], h[(k + 1, k - 1)]) };
            let (g, _) = Givens::new(x, y);
            let start = if k > l { k - 1 } else { l };
            for j in start..n {
                let (p, q) = g.apply(h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = p;
                h[(k + 1, j)] = q;
            }
            let last = (k + 2).min(hi);
            for i in 0..=last {
                let (p, q) = g.apply_right_h(h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = p;
                h[(i, k + 1)] = q;
            }
            for i in 0..n {
                let (p, q) = g.apply_right_h(z[(i, k)], z[(i, k + 1)]);
                z[(i, k)] = p;
                z[(i, k + 1)] = q;
            }
            if k > l {
                h[(k + 1, k - 1)] = ZERO;
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(Schur { t: h, z })
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.t.diagonal()
    }

    pub fn dim(&self) -> usize {
        self.t.rows()
    }

    /// Exchange diagonal entries `k` and `k + 1` by a unitary rotation.
    pub fn swap_adjacent(&mut self, k: usize) {
        let n = self.dim();
        assert!(k + 1 < n);
        let t11 = self.t[(k, k)];
        let t22 = self.t[(k + 1, k + 1)];
        let (g, _) = Givens::new(self.t[(k, k + 1)], t22 - t11);
        for j in k + 2..n {
            let (p, q) = g.apply(self.t[(k, j)], self.t[(k + 1, j)]);
            self.t[(k, j)] = p;
            self.t[(k + 1, j)] = q;
        }
        for i in 0..k {
            let (p, q) = g.apply_right_h(self.t[(i, k)], self.t[(i, k + 1)]);
            self.t[(i, k)] = p;
            self.t[(i, k + 1)] = q;
        }
        self.t[(k, k)] = t22;
        self.t[(k + 1, k + 1)] = t11;
        for i in 0..n {
            let (p, q) = g.apply_right_h(self.z[(i, k)], self.z[(i, k + 1)]);
            self.z[(i, k)] = p;
            self.z[(i, k + 1)] = q;
        }
    }

    /// Move the selected diagonal entries to the leading block, keeping the
    /// relative order inside both groups. Returns the size of the block.
    pub fn reorder(&mut self, select: &[bool]) -> usize {
        assert_eq!(select.len(), self.dim());
        let mut sel = select.to_vec();
        let mut placed = 0;
        for i in 0..sel.len() {
            if sel[i] {
                let mut j = i;
                while j > placed {
                    self.swap_adjacent(j - 1);
                    sel.swap(j - 1, j);
                    j -= 1;
                }
                placed += 1;
            }
        }
        placed
    }

    /// Sort the diagonal by a strict key, largest first.
    fn sort_by_key_desc(&mut self, key: impl Fn(C64) -> f64) {
        let n = self.dim();
        for pos in 0..n {
            let best = (pos..n).max_by(|&a, &b| key(self.t[(a, a)]).total_cmp(&key(self.t[(b, b)])).then(b.cmp(&a)));
            let mut j = best.expect("non-empty range");
            while j > pos {
                self.swap_adjacent(j - 1);
                j -= 1;
            }
        }
    }
}

/// Right eigenvector of upper triangular `t` for diagonal entry `k`.
fn triangular_right_vector(t: &CMatrix, k: usize, smin: f64) -> Vec<C64> {
    let n = t.rows();
    let lambda = t[(k, k)];
    let mut x = vec![ZERO; n];
    x[k] = C64::new(1.0, 0.0);
    for i in (0..k).rev() {
        let mut s = ZERO;
        for j in i + 1..=k {
            s += t[(i, j)] * x[j];
        }
        let mut d = t[(i, i)] - lambda;
        if d.norm() < smin {
            d = C64::new(smin, 0.0);
        }
        x[i] = -s / d;
        if x[i].norm() > 1e100 {
            for v in x.iter_mut().take(k + 1) {
                *v *= 1e-100;
            }
        }
    }
    x
}

/// Vector `y` with `yᵀ t = λ_k yᵀ`, `t` upper triangular.
fn triangular_left_vector(t: &CMatrix, k: usize, smin: f64) -> Vec<C64> {
    let n = t.rows();
    let lambda = t[(k, k)];
    let mut y = vec![ZERO; n];
    y[k] = C64::new(1.0, 0.0);
    for i in k + 1..n {
        let mut s = ZERO;
        for j in k..i {
            s += y[j] * t[(j, i)];
        }
        let mut d = lambda - t[(i, i)];
        if d.norm() < smin {
            d = C64::new(smin, 0.0);
        }
        y[i] = s / d;
        if y[i].norm() > 1e100 {
            for v in y.iter_mut() {
                *v *= 1e-100;
            }
        }
    }
    y
}

fn normalized(v: Vec<C64>) -> Vec<C64> {
    let n = norm2(&v);
    if n == 0.0 || !n.is_finite() {
        return v;
    }
    v.into_iter().map(|z| z / n).collect()
}

/// Operator norm proxy `sqrt(‖M‖₁ ‖M‖_∞)`, an upper bound for `‖M‖₂`.
pub fn storage_norm(s: &Storage) -> f64 {
    match s {
        Storage::Dense(m) => (m.norm_one() * m.norm_inf()).sqrt(),
        Storage::Sparse(m) => (m.norm_one() * m.norm_inf()).sqrt(),
    }
}

fn storage_matvec(s: &Storage, x: &[C64]) -> Vec<C64> {
    match s {
        Storage::Dense(m) => m.matvec(x),
        Storage::Sparse(m) => m.matvec(x),
    }
}

fn relative_residual(s: &Storage, norm: f64, lambda: C64, v: &[C64]) -> f64 {
    let mv = storage_matvec(s, v);
    let r: Vec<C64> = mv.iter().zip(v).map(|(a, b)| a - lambda * b).collect();
    let vn = norm2(v);
    if vn == 0.0 {
        return f64::INFINITY;
    }
    norm2(&r) / (norm.max(f64::MIN_POSITIVE) * vn)
}

/// Flag eigenvalues belonging to clusters whose eigenvectors are
/// numerically dependent (a Jordan block shows up this way).
fn defect_flags(values: &[C64], vectors: &[Vec<C64>], scale: f64) -> Vec<bool> {
    let n = values.len();
    let tol = 1e-5 * scale.max(1.0);
    let mut flags = vec![false; n];
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        // cluster by single linkage
        let mut cluster = vec![i];
        seen[i] = true;
        let mut q = 0;
        while q < cluster.len() {
            let c = cluster[q];
            for j in 0..n {
                if !seen[j] && (values[j] - values[c]).norm() <= tol {
                    seen[j] = true;
                    cluster.push(j);
                }
            }
            q += 1;
        }
        if cluster.len() < 2 {
            continue;
        }
        let mut basis: Vec<Vec<C64>> = Vec::new();
        let mut dependent = false;
        for &c in &cluster {
            let mut v = normalized(vectors[c].clone());
            for _ in 0..2 {
                for b in &basis {
                    let p = dotc(b, &v);
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= p * bi;
                    }
                }
            }
            let r = norm2(&v);
            if r < 1e-6 {
                dependent = true;
            } else {
                basis.push(v.into_iter().map(|z| z / r).collect());
            }
        }
        if dependent {
            for &c in &cluster {
                flags[c] = true;
            }
        }
    }
    flags
}

#[derive(Clone, Copy, Debug)]
pub struct DenseOptions {
    pub left_vectors: bool,
    pub dense_limit: usize,
    /// Certification threshold on the relative residual.
    pub tolerance: f64,
}

impl Default for DenseOptions {
    fn default() -> Self {
        DenseOptions { left_vectors: false, dense_limit: 4096, tolerance: 1e-10 }
    }
}

/// Full eigen-decomposition of a dense matrix, sorted by
/// [`resonance_order`].
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub right: Vec<Vec<C64>>,
    pub left: Option<Vec<Vec<C64>>>,
    pub residuals: Vec<f64>,
    pub defective: Vec<bool>,
}

pub fn eig(m: &CMatrix, opts: &DenseOptions) -> Result<Eigen> {
    if m.rows() > opts.dense_limit {
        return Err(Error::arg(format!(
            "dimension {} exceeds the dense limit {}; use the shift-invert solver",
            m.rows(),
            opts.dense_limit
        )));
    }
    let s = schur(m)?;
    let n = m.rows();
    let smin = f64::EPSILON * s.t.max_abs().max(f64::MIN_POSITIVE);
    let values = s.eigenvalues();
    let right: Vec<Vec<C64>> = (0..n)
        .map(|k| {
            let x = triangular_right_vector(&s.t, k, smin);
            normalized(s.z.matvec(&x))
        })
        .collect();
    let left = opts.left_vectors.then(|| {
        let zc = s.z.conj();
        (0..n)
            .map(|k| {
                let y = triangular_left_vector(&s.t, k, smin);
                normalized(zc.matvec(&y))
            })
            .collect::<Vec<_>>()
    });
    let storage = Storage::Dense(m.clone());
    let norm = storage_norm(&storage);
    let residuals: Vec<f64> = (0..n)
        .map(|k| if norm == 0.0 { 0.0 } else { relative_residual(&storage, norm, values[k], &right[k]) })
        .collect();
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defective = defect_flags(&values, &right, scale);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resonance_order(&values[a], &values[b]).then(a.cmp(&b)));
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tolerance {
        return Err(Error::solver(format!(
            "eigenpair residual {worst:.3e} exceeds the certification tolerance {:.1e}",
            opts.tolerance
        )));
    }
    Ok(Eigen {
        values: order.iter().map(|&i| values[i]).collect(),
        right: order.iter().map(|&i| right[i].clone()).collect(),
        left: left.map(|l| order.iter().map(|&i| l[i].clone()).collect()),
        residuals: order.iter().map(|&i| residuals[i]).collect(),
        defective: order.iter().map(|&i| defective[i]).collect(),
    })
}

/// Full spectrum of an assembled operator.
pub fn dense_spectrum(op: &OperatorMatrix) -> Result<ResonanceSet> {
    dense_spectrum_with(op, &DenseOptions::default())
}

pub fn dense_spectrum_with(op: &OperatorMatrix, opts: &DenseOptions) -> Result<ResonanceSet> {
    if op.dim() > opts.dense_limit {
        return Err(Error::arg(format!(
            "operator dimension {} exceeds the dense limit {}",
            op.dim(),
            opts.dense_limit
        )));
    }
    let e = eig(&op.to_dense(), opts)?;
    Ok(ResonanceSet {
        eigenvalues: e.values,
        right_vectors: Some(e.right),
        left_vectors: e.left,
        residuals: e.residuals,
        defective: e.defective,
        tolerance: opts.tolerance,
        epsilon: op.epsilon,
        truncation: Some(op.truncation),
        solver: SolverInfo::Dense,
        window: None,
    })
}

// ---------------------------------------------------------------------------
// Shifted factorizations and the resolvent

/// LU factorization of `M − shift·I`, dense or banded by storage.
pub fn factor_shifted(s: &Storage, shift: C64) -> Box<dyn Factorization> {
    match s {
        Storage::Dense(m) => Box::new(DenseLu::new(&m.shifted(shift))),
        Storage::Sparse(m) => Box::new(BandLu::from_csr_shifted(m, shift)),
    }
}

/// Condition estimates above this mark the resolvent point as near-singular.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e14;

/// Factorized `z − M`, reusable across right-hand sides.
pub struct Resolvent<'a> {
    storage: &'a Storage,
    z: C64,
    lu: Box<dyn Factorization>,
    condition: f64,
}

#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub solution: Vec<C64>,
    pub relative_residual: f64,
    pub condition_estimate: f64,
    /// Condition estimate above [`NEAR_SINGULAR_CONDITION`]; the solution is
    /// then unreliable (possibly non-finite) and the caller decides.
    pub near_singular: bool,
}

impl<'a> Resolvent<'a> {
    pub fn new(op: &'a OperatorMatrix, z: C64) -> Self {
        Self::from_storage(&op.storage, z)
    }

    pub fn from_storage(storage: &'a Storage, z: C64) -> Self {
        let lu = factor_shifted(storage, z);
        let condition = lu.condition_estimate();
        Resolvent { storage, z, lu, condition }
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn near_singular(&self) -> bool {
        !(self.condition <= NEAR_SINGULAR_CONDITION)
    }

    /// Plain solve of `(z − M) u = rhs`, no refinement.
    pub fn apply(&self, rhs: &[C64]) -> Vec<C64> {
        self.lu.solve(rhs).into_iter().map(|v| -v).collect()
    }

    fn residual(&self, u: &[C64], rhs: &[C64]) -> Vec<C64> {
        let mu = storage_matvec(self.storage, u);
        rhs.iter().zip(u).zip(&mu).map(|((b, ui), mi)| b - (self.z * ui - mi)).collect()
    }

    /// Solve with iterative refinement until the relative residual is at
    /// most `1e−10` (or refinement stops helping).
    pub fn solve(&self, rhs: &[C64]) -> Result<ResolventSolution> {
        if rhs.len() != self.lu.dim() {
            return Err(Error::arg(format!(
                "right-hand side length {} does not match operator size {}",
                rhs.len(),
                self.lu.dim()
            )));
        }
        let bn = norm2(rhs);
        let mut u = self.apply(rhs);
        let mut rel = if bn == 0.0 { 0.0 } else { norm2(&self.residual(&u, rhs)) / bn };
        for _ in 0..5 {
            if !(rel > 1e-10) || !rel.is_finite() {
                break;
            }
            let r = self.residual(&u, rhs);
            let du = self.apply(&r);
            let cand: Vec<C64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();
            let rel_new = norm2(&self.residual(&cand, rhs)) / bn;
            if !(rel_new < rel) {
                break;
            }
            u = cand;
            rel = rel_new;
        }
        Ok(ResolventSolution {
            solution: u,
            relative_residual: rel,
            condition_estimate: self.condition,
            near_singular: self.near_singular() || !rel.is_finite(),
        })
    }
}

/// Solve `(z − M) u = rhs`.
pub fn resolvent_solve(op: &OperatorMatrix, z: C64, rhs: &[C64]) -> Result<ResolventSolution> {
    Resolvent::new(op, z).solve(rhs)
}

// ---------------------------------------------------------------------------
// Shift-invert Krylov–Schur

#[derive(Clone, Copy, Debug)]
pub struct ArnoldiOptions {
    /// Defaults to `max(4·count, 20)`, capped by the operator size.
    pub krylov_dim: Option<usize>,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        ArnoldiOptions { krylov_dim: None, max_restarts: 300, seed: 0x5eed_1234 }
    }
}

/// The `count` eigenvalues nearest `shift`.
pub fn shift_invert_arnoldi(op: &OperatorMatrix, shift: C64, count: usize, tol: f64) -> Result<ResonanceSet> {
    shift_invert_arnoldi_with(op, shift, count, tol, &ArnoldiOptions::default())
}

pub fn shift_invert_arnoldi_with(
    op: &OperatorMatrix,
    shift: C64,
    count: usize,
    tol: f64,
    opts: &ArnoldiOptions,
) -> Result<ResonanceSet> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(Error::arg(format!("requested {count} eigenvalues from an operator of size {n}")));
    }
    if !(tol > 0.0) {
        return Err(Error::arg("Arnoldi tolerance must be positive"));
    }
    let m = opts.krylov_dim.unwrap_or((4 * count).max(20)).min(n);
    if count > m {
        return Err(Error::arg(format!("count {count} exceeds the Krylov dimension {m}")));
    }
    // factorization with the documented retry policy
    let mut sigma = shift;
    let mut lu = factor_shifted(&op.storage, sigma);
    let mut retries = 0;
    while lu.is_singular() || !(lu.condition_estimate() < 1.0 / f64::EPSILON) {
        if retries == 3 {
            return Err(Error::solver(format!("shifted matrix stays singular near {shift} after 3 perturbations")));
        }
        retries += 1;
        sigma += C64::new(1e-8, 1e-8);
        lu = factor_shifted(&op.storage, sigma);
    }
    let apply = |x: &[C64]| lu.solve(x);
    let (thetas, vectors) = krylov_schur(&apply, n, m, count, tol, opts)?;

    let norm = storage_norm(&op.storage);
    let mut values = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for (theta, v) in thetas.iter().zip(&vectors) {
        let lambda = sigma + C64::new(1.0, 0.0) / theta;
        residuals.push(relative_residual(&op.storage, norm, lambda, v));
        values.push(lambda);
    }
    let certified = 10.0 * tol * (1.0 + sigma.norm() / norm.max(f64::MIN_POSITIVE)) + 1e-13;
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > certified {
        return Err(Error::NoConvergence {
            message: format!("Ritz residual {worst:.3e} exceeds {certified:.3e}"),
            partial: values,
        });
    }
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defective = defect_flags(&values, &vectors, scale);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| resonance_order(&values[a], &values[b]).then(a.cmp(&b)));
    Ok(ResonanceSet {
        eigenvalues: order.iter().map(|&i| values[i]).collect(),
        right_vectors: Some(order.iter().map(|&i| vectors[i].clone()).collect()),
        left_vectors: None,
        residuals: order.iter().map(|&i| residuals[i]).collect(),
        defective: order.iter().map(|&i| defective[i]).collect(),
        tolerance: certified,
        epsilon: op.epsilon,
        truncation: Some(op.truncation),
        solver: SolverInfo::Arnoldi { shift: sigma, krylov_dim: m },
        window: None,
    })
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    normalized(v)
}

/// Orthogonalize `w` against `basis` twice (classical Gram–Schmidt with
/// reorthogonalization); returns the projection coefficients.
fn orthogonalize(basis: &[Vec<C64>], w: &mut [C64]) -> Vec<C64> {
    let mut h = vec![ZERO; basis.len()];
    for _ in 0..2 {
        let c: Vec<C64> = basis.iter().map(|b| dotc(b, w)).collect();
        for (b, ci) in basis.iter().zip(&c) {
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= ci * bi;
            }
        }
        for (hi, ci) in h.iter_mut().zip(&c) {
            *hi += ci;
        }
    }
    h
}

/// Largest-modulus eigenpairs of the operator `apply` by Krylov–Schur.
/// Converged Ritz pairs stay locked in the retained Schur block across
/// restarts. Returns `(θ_i, unit Ritz vectors)`.
fn krylov_schur(
    apply: &dyn Fn(&[C64]) -> Vec<C64>,
    n: usize,
    m: usize,
    count: usize,
    tol: f64,
    opts: &ArnoldiOptions,
) -> Result<(Vec<C64>, Vec<Vec<C64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<C64>> = vec![random_unit(&mut rng, n)];
    let mut h = CMatrix::zeros(m + 1, m);
    let mut p = 0usize;
    let keep = (count + (m - count) / 2).clamp(count, m.saturating_sub(1).max(count));
    for _restart in 0..opts.max_restarts {
        for j in p..m {
            let mut w = apply(&basis[j]);
            let wn0 = norm2(&w);
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, c) in coeffs.iter().enumerate() {
                h[(i, j)] = *c;
            }
            let beta = norm2(&w);
            if beta <= 1e-12 * wn0.max(f64::MIN_POSITIVE) {
                // invariant subspace: continue with a fresh orthogonal direction
                h[(j + 1, j)] = ZERO;
                if basis.len() < n {
                    let mut r = random_unit(&mut rng, n);
                    orthogonalize(&basis, &mut r);
                    basis.push(normalized(r));
                } else {
                    basis.push(vec![ZERO; n]);
                }
            } else {
                h[(j + 1, j)] = C64::new(beta, 0.0);
                basis.push(w.into_iter().map(|z| z / beta).collect());
            }
        }
        let hm = CMatrix::from_fn(m, m, |i, j| h[(i, j)]);
        let mut s = schur(&hm)?;
        s.sort_by_key_desc(|z| z.norm());
        let hnext = h[(m, m - 1)];
        let b: Vec<C64> = (0..m).map(|i| hnext * s.z[(m - 1, i)]).collect();
        let smin = f64::EPSILON * s.t.max_abs().max(f64::MIN_POSITIVE);
        let mut all = true;
        let mut ys = Vec::with_capacity(count);
        for i in 0..count {
            let y = normalized(triangular_right_vector(&s.t, i, smin));
            let r: C64 = b.iter().zip(&y).map(|(a, c)| a * c).sum();
            if r.norm() > tol * s.t[(i, i)].norm() {
                all = false;
            }
            ys.push(y);
        }
        if all {
            let vm = &basis[..m];
            let mut thetas = Vec::with_capacity(count);
            let mut vecs = Vec::with_capacity(count);
            for (i, y) in ys.iter().enumerate() {
                let zy = s.z.matvec(y);
                let mut u = vec![ZERO; n];
                for (vj, c) in vm.iter().zip(&zy) {
                    for (ui, vi) in u.iter_mut().zip(vj) {
                        *ui += c * vi;
                    }
                }
                thetas.push(s.t[(i, i)]);
                vecs.push(normalized(u));
            }
            return Ok((thetas, vecs));
        }
        if keep >= m {
            return Err(Error::solver("Krylov subspace exhausted before convergence; raise the Krylov dimension"));
        }
        // thick restart on the leading `keep` Schur vectors
        let mut new_basis = Vec::with_capacity(m + 1);
        for i in 0..keep {
            let mut u = vec![ZERO; n];
            for (j, vj) in basis[..m].iter().enumerate() {
                let c = s.z[(j, i)];
                if c != ZERO {
                    for (ui, vi) in u.iter_mut().zip(vj) {
                        *ui += c * vi;
                    }
                }
            }
            new_basis.push(u);
        }
        new_basis.push(basis[m].clone());
        basis = new_basis;
        h = CMatrix::zeros(m + 1, m);
        for i in 0..keep {
            for j in i..keep {
                h[(i, j)] = s.t[(i, j)];
            }
            h[(keep, i)] = b[i];
        }
        p = keep;
    }
    Err(Error::solver(format!("Krylov–Schur stagnated after {} restarts", opts.max_restarts)))
}
