//! Truncated Fourier–Galerkin matrices of the regularized flow generator
//! `(1/i) V + iεΔ` on `T^d`, and of the noisy Koopman operator `G_ε ∘ f*`
//! for torus maps.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::linalg::{CMatrix, CsrMatrix, C64};
use crate::models::{FlowField, MapSystem, TrigPoly, TWO_PI};
use crate::{Error, Result};

/// Modes `k ∈ Z^d` with `|k|_∞ ≤ K`, indexed lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FourierTruncation {
    pub dim: usize,
    pub k_max: usize,
}

impl FourierTruncation {
    pub fn new(dim: usize, k_max: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::arg(format!("truncation dimension must be 1..=3, got {dim}")));
        }
        Ok(FourierTruncation { dim, k_max })
    }

    fn side(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn size(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        k.len() == self.dim && k.iter().all(|v| v.unsigned_abs() as usize <= self.k_max)
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let side = self.side();
        Some(k.iter().fold(0usize, |acc, &v| acc * side + (v + self.k_max as i64) as usize))
    }

    pub fn mode(&self, index: usize) -> Vec<i64> {
        assert!(index < self.size(), "mode index {index} out of range");
        let side = self.side();
        let mut k = vec![0i64; self.dim];
        let mut r = index;
        for j in (0..self.dim).rev() {
            k[j] = (r % side) as i64 - self.k_max as i64;
            r /= side;
        }
        k
    }

    pub fn modes(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.size()).map(move |i| self.mode(i))
    }

    /// Index of the reflected mode `-k`.
    pub fn reflect(&self, index: usize) -> usize {
        self.size() - 1 - index
    }

    /// Fraction of `Σ|c_k|²` carried by modes with `|k|_∞ ≥ K − depth`.
    pub fn boundary_mass(&self, v: &[C64], depth: usize) -> f64 {
        let edge = self.k_max.saturating_sub(depth) as u64;
        let mut total = 0.0;
        let mut edge_mass = 0.0;
        for (i, c) in v.iter().enumerate() {
            let w = c.norm_sqr();
            total += w;
            if self.mode(i).iter().any(|x| x.unsigned_abs() >= edge) {
                edge_mass += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge_mass / total
        }
    }

    /// Coefficient vector of a real trigonometric polynomial.
    pub fn coefficients_of(&self, p: &TrigPoly) -> Result<Vec<C64>> {
        if p.dim() != self.dim {
            return Err(Error::arg("polynomial dimension differs from truncation dimension"));
        }
        let mut v = vec![C64::new(0.0, 0.0); self.size()];
        for (k, c) in p.coefficients() {
            if let Some(i) = self.index_of(&k) {
                v[i] += c;
            }
        }
        Ok(v)
    }

    /// Evaluate `Σ c_k e^{ik·x}` at a point.
    pub fn evaluate(&self, coeffs: &[C64], x: &[f64]) -> C64 {
        coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != C64::new(0.0, 0.0))
            .map(|(i, c)| {
                let k = self.mode(i);
                let ph: f64 = k.iter().zip(x).map(|(a, b)| *a as f64 * b).sum();
                c * C64::from_polar(1.0, ph)
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    FlowGenerator,
    NoisyKoopman,
}

impl OperatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorKind::FlowGenerator => "flow_generator",
            OperatorKind::NoisyKoopman => "noisy_koopman",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Dense(CMatrix),
    Sparse(CsrMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSource {
    Field(FlowField),
    Map(MapSystem),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoragePolicy {
    /// Dense up to `dense_limit`, sparse above.
    Auto,
    Dense,
    Sparse,
}

#[derive(Clone, Copy, Debug)]
pub struct AssemblyOptions {
    pub storage: StoragePolicy,
    pub dense_limit: usize,
    /// Use the quadrature path for maps even without a perturbation.
    pub force_quadrature: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { storage: StoragePolicy::Auto, dense_limit: 4096, force_quadrature: false }
    }
}

/// A truncated operator with its provenance.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub epsilon: f64,
    pub truncation: FourierTruncation,
    pub storage: Storage,
    pub source: OperatorSource,
    /// Upper bound on the mollifier weight of modes dropped by the
    /// truncation (noisy Koopman only; zero for flow generators).
    pub dropped_weight_bound: f64,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.truncation.size()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn to_dense(&self) -> CMatrix {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(m) => CsrMatrix::from_dense(m),
            Storage::Sparse(s) => s.clone(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse(s) => s.row_entries(i).find(|(c, _)| *c == j).map(|(_, v)| v).unwrap_or_default(),
        }
    }

    pub fn field(&self) -> Option<&FlowField> {
        match &self.source {
            OperatorSource::Field(f) => Some(f),
            OperatorSource::Map(_) => None,
        }
    }

    pub fn norm_fro(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m.norm_fro(),
            Storage::Sparse(s) => s.norm_fro(),
        }
    }

    pub fn norm_one(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m.norm_one(),
            Storage::Sparse(s) => s.norm_one(),
        }
    }

    /// Matrix–vector product with the stored matrix.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!("vector length {} does not match operator size {}", x.len(), self.dim())));
        }
        Ok(match &self.storage {
            Storage::Dense(m) => m.matvec(x),
            Storage::Sparse(s) => s.matvec(x),
        })
    }

    /// Product computed band-wise from the field coefficients without
    /// touching the stored matrix (flow generators only).
    pub fn apply_matrix_free(&self, x: &[C64]) -> Result<Vec<C64>> {
        let field = match (&self.kind, &self.source) {
            (OperatorKind::FlowGenerator, OperatorSource::Field(f)) => f,
            _ => return Err(Error::arg("matrix-free apply is available for flow generators only")),
        };
        if x.len() != self.dim() {
            return Err(Error::arg(format!("vector length {} does not match operator size {}", x.len(), self.dim())));
        }
        let t = &self.truncation;
        let coeffs: Vec<Vec<(Vec<i64>, C64)>> =
            field.components().expect("flow generators come from torus fields").iter().map(|p| p.coefficients()).collect();
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for (col, xv) in x.iter().enumerate() {
            if *xv == C64::new(0.0, 0.0) {
                continue;
            }
            let k = t.mode(col);
            let k2: f64 = k.iter().map(|v| (v * v) as f64).sum();
            y[col] += C64::new(0.0, -self.epsilon * k2) * xv;
            for (j, comp) in coeffs.iter().enumerate() {
                if k[j] == 0 {
                    continue;
                }
                for (m, c) in comp {
                    let target: Vec<i64> = k.iter().zip(m).map(|(a, b)| a + b).collect();
                    if let Some(row) = t.index_of(&target) {
                        y[row] += c * k[j] as f64 * xv;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Write the documented sparse-triplet text format.
    ///
    /// ```text
    /// kind <flow_generator|noisy_koopman>
    /// d <dimension>
    /// K <cutoff>
    /// epsilon <value>
    /// size <n>
    /// nnz <count>
    /// <row> <col> <re> <im>      (one line per stored entry, row-major)
    /// ```
    /// Floats use 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let csr = self.to_csr();
        writeln!(w, "kind {}", self.kind.as_str())?;
        writeln!(w, "d {}", self.truncation.dim)?;
        writeln!(w, "K {}", self.truncation.k_max)?;
        writeln!(w, "epsilon {:.16e}", self.epsilon)?;
        writeln!(w, "size {}", self.dim())?;
        writeln!(w, "nnz {}", csr.nnz())?;
        for (i, j, v) in csr.triplets() {
            writeln!(w, "{i} {j} {:.16e} {:.16e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Contents of a triplet file.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletFile {
    pub kind: String,
    pub dim: usize,
    pub k_max: usize,
    pub epsilon: f64,
    pub matrix: CsrMatrix,
}

pub fn read_triplets<R: BufRead>(r: R) -> Result<TripletFile> {
    let mut header = std::collections::HashMap::new();
    let mut trip = Vec::new();
    let bad = |line: &str| Error::arg(format!("malformed triplet line: {line}"));
    for line in r.lines() {
        let line = line.map_err(|e| Error::arg(e.to_string()))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.len() {
            0 => continue,
            2 => {
                header.insert(parts[0].to_string(), parts[1].to_string());
            }
            4 => {
                let i: usize = parts[0].parse().map_err(|_| bad(&line))?;
                let j: usize = parts[1].parse().map_err(|_| bad(&line))?;
                let re: f64 = parts[2].parse().map_err(|_| bad(&line))?;
                let im: f64 = parts[3].parse().map_err(|_| bad(&line))?;
                trip.push((i, j, C64::new(re, im)));
            }
            _ => return Err(bad(&line)),
        }
    }
    let get = |key: &str| header.get(key).cloned().ok_or_else(|| Error::arg(format!("triplet header lacks `{key}`")));
    let size: usize = get("size")?.parse().map_err(|_| Error::arg("bad size"))?;
    let nnz: usize = get("nnz")?.parse().map_err(|_| Error::arg("bad nnz"))?;
    if nnz != trip.len() {
        return Err(Error::arg(format!("header promises {nnz} entries, file has {}", trip.len())));
    }
    Ok(TripletFile {
        kind: get("kind")?,
        dim: get("d")?.parse().map_err(|_| Error::arg("bad d"))?,
        k_max: get("K")?.parse().map_err(|_| Error::arg("bad K"))?,
        epsilon: get("epsilon")?.parse().map_err(|_| Error::arg("bad epsilon"))?,
        matrix: CsrMatrix::from_triplets(size, size, trip),
    })
}

fn finish(
    kind: OperatorKind,
    epsilon: f64,
    truncation: FourierTruncation,
    triplets: Vec<(usize, usize, C64)>,
    source: OperatorSource,
    opts: &AssemblyOptions,
    dropped_weight_bound: f64,
) -> Result<OperatorMatrix> {
    let n = truncation.size();
    let dense = match opts.storage {
        StoragePolicy::Dense => true,
        StoragePolicy::Sparse => false,
        StoragePolicy::Auto => n <= opts.dense_limit,
    };
    let csr = CsrMatrix::from_triplets(n, n, triplets);
    if csr.triplets().any(|(_, _, z)| !z.is_finite()) {
        return Err(Error::Evaluation(format!("{} assembly produced non-finite entries", kind.as_str())));
    }
    let storage = if dense { Storage::Dense(csr.to_dense()) } else { Storage::Sparse(csr) };
    Ok(OperatorMatrix { kind, epsilon, truncation, storage, source, dropped_weight_bound })
}

/// Galerkin matrix of `(1/i)V·∂ + iεΔ` with entries
/// `M[k', k] = ⟨e^{ik'·x}, P_ε e^{ik·x}⟩` under the normalized measure.
/// The advection part couples `k → k + m` with weight `Σ_j c_{j,m} k_j`;
/// targets outside the truncation are dropped.
pub fn assemble_flow_generator(field: &FlowField, epsilon: f64, trunc: FourierTruncation) -> Result<OperatorMatrix> {
    assemble_flow_generator_with(field, epsilon, trunc, &AssemblyOptions::default())
}

pub fn assemble_flow_generator_with(
    field: &FlowField,
    epsilon: f64,
    trunc: FourierTruncation,
    opts: &AssemblyOptions,
) -> Result<OperatorMatrix> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::arg(format!(
            "epsilon must be finite and nonnegative, got {epsilon}; negative viscosity corresponds to conjugated spectra"
        )));
    }
    let polys = field
        .components()
        .ok_or_else(|| Error::arg(format!("{} is not a torus field; operators are assembled on T^d only", field.name())))?;
    if field.dimension() != trunc.dim {
        return Err(Error::arg(format!(
            "field dimension {} differs from truncation dimension {}",
            field.dimension(),
            trunc.dim
        )));
    }
    if field.max_harmonic() as usize > trunc.k_max {
        return Err(Error::arg(format!(
            "field harmonics reach {} but the truncation keeps |k| ≤ {}",
            field.max_harmonic(),
            trunc.k_max
        )));
    }
    let coeffs: Vec<Vec<(Vec<i64>, C64)>> = polys.iter().map(|p| p.coefficients()).collect();
    let mut trip = Vec::new();
    for col in 0..trunc.size() {
        let k = trunc.mode(col);
        let k2: f64 = k.iter().map(|v| (v * v) as f64).sum();
        if epsilon != 0.0 && k2 != 0.0 {
            trip.push((col, col, C64::new(0.0, -epsilon * k2)));
        }
        for (j, comp) in coeffs.iter().enumerate() {
            if k[j] == 0 {
                continue;
            }
            for (m, c) in comp {
                let target: Vec<i64> = k.iter().zip(m).map(|(a, b)| a + b).collect();
                if let Some(row) = trunc.index_of(&target) {
                    trip.push((row, col, c * k[j] as f64));
                }
            }
        }
    }
    finish(OperatorKind::FlowGenerator, epsilon, trunc, trip, OperatorSource::Field(field.clone()), opts, 0.0)
}

/// Matrix of `G_ε ∘ f*` with the heat-kernel mollifier `e^{−ε|k|²}`.
pub fn assemble_noisy_koopman(map: &MapSystem, epsilon: f64, trunc: FourierTruncation) -> Result<OperatorMatrix> {
    assemble_noisy_koopman_with(map, epsilon, trunc, &AssemblyOptions::default())
}

pub fn assemble_noisy_koopman_with(
    map: &MapSystem,
    epsilon: f64,
    trunc: FourierTruncation,
    opts: &AssemblyOptions,
) -> Result<OperatorMatrix> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::arg(format!("noisy propagator needs epsilon > 0, got {epsilon}")));
    }
    if trunc.dim != 2 {
        return Err(Error::arg("torus maps live on T²; use a two-dimensional truncation"));
    }
    let a = map.matrix();
    let kk = trunc.k_max as i64;
    let damp = |k: &[i64]| (-epsilon * k.iter().map(|v| (v * v) as f64).sum::<f64>()).exp();
    let pullback = |k: &[i64]| -> [i64; 2] {
        // e^{ik·Ax} = e^{i(Aᵀk)·x}
        [a[0][0] * k[0] + a[1][0] * k[1], a[0][1] * k[0] + a[1][1] * k[1]]
    };
    let has_perturbation = map.perturbation().map(|p| p.iter().any(|c| !c.terms().is_empty())).unwrap_or(false);
    let mut trip = Vec::new();
    if !has_perturbation && !opts.force_quadrature {
        for col in 0..trunc.size() {
            let k = trunc.mode(col);
            let q = pullback(&k);
            if let Some(row) = trunc.index_of(&q) {
                trip.push((row, col, C64::new(damp(&q), 0.0)));
            }
        }
    } else {
        // f*e^{ik·x} = e^{iq·x} e^{iq·p(x)} with q = Aᵀk; the second factor is
        // expanded on an N×N grid with a separable DFT.
        let n = (8 * trunc.k_max).max(16);
        let h = TWO_PI / n as f64;
        let zero_poly = TrigPoly::from_terms(2, &[])?;
        let (p1, p2) = match map.perturbation() {
            Some(p) => (p[0].clone(), p[1].clone()),
            None => (zero_poly.clone(), zero_poly),
        };
        let mut disp = vec![[0.0f64; 2]; n * n];
        for i in 0..n {
            for j in 0..n {
                let x = [i as f64 * h, j as f64 * h];
                disp[i * n + j] = [p1.eval(&x), p2.eval(&x)];
            }
        }
        // twiddles e^{-i s x_j} for shifts s in [-range, range]
        let twiddle = |s: i64, j: usize| C64::from_polar(1.0, -(s as f64) * j as f64 * h);
        for col in 0..trunc.size() {
            let k = trunc.mode(col);
            let q = pullback(&k);
            // shifts n = k' - q needed for targets k' inside the truncation
            let s1: Vec<i64> = (-kk..=kk).map(|t| t - q[0]).collect();
            let s2: Vec<i64> = (-kk..=kk).map(|t| t - q[1]).collect();
            let samples: Vec<C64> =
                disp.iter().map(|d| C64::from_polar(1.0, q[0] as f64 * d[0] + q[1] as f64 * d[1])).collect();
            // transform along x₂
            let mut partial = vec![C64::new(0.0, 0.0); n * s2.len()];
            for i in 0..n {
                for (b, &s) in s2.iter().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..n {
                        acc += samples[i * n + j] * twiddle(s, j);
                    }
                    partial[i * s2.len() + b] = acc;
                }
            }
            for &sa in &s1 {
                for (b, &sb) in s2.iter().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for i in 0..n {
                        acc += partial[i * s2.len() + b] * twiddle(sa, i);
                    }
                    let coeff = acc / (n * n) as f64;
                    let target = [q[0] + sa, q[1] + sb];
                    let row = trunc.index_of(&target).expect("targets enumerate the truncation");
                    let v = coeff * damp(&target);
                    if v != C64::new(0.0, 0.0) {
                        trip.push((row, col, v));
                    }
                }
            }
        }
    }
    let bound = (-epsilon * (trunc.k_max * trunc.k_max) as f64).exp();
    finish(OperatorKind::NoisyKoopman, epsilon, trunc, trip, OperatorSource::Map(map.clone()), opts, bound)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// Flow generators: `max |R conj(M) R + M|`, the matrix form of
    /// `conj(P u) = −P conj(u)`. Koopman: `max |R conj(K) R − K|`.
    pub reflection_violation: f64,
    /// Largest imaginary part among the entries.
    pub max_imag_entry: f64,
}

/// Check the reality symmetry at the matrix level; `R` is the mode
/// reflection `k → −k`.
pub fn conjugate_spectrum_check(op: &OperatorMatrix) -> SymmetryReport {
    let t = &op.truncation;
    let sign = match op.kind {
        OperatorKind::FlowGenerator => 1.0,
        OperatorKind::NoisyKoopman => -1.0,
    };
    let mut worst = 0.0f64;
    let mut imag = 0.0f64;
    let csr = op.to_csr();
    for (i, j, v) in csr.triplets() {
        imag = imag.max(v.im.abs());
        let partner = op.entry(t.reflect(i), t.reflect(j)).conj();
        worst = worst.max((partner + sign * v).norm());
    }
    // a partner missing from storage shows up as |v| against zero
    SymmetryReport { reflection_violation: worst, max_imag_entry: imag }
}

/// Galerkin element `⟨e^{ik'x}, P_ε e^{ikx}⟩` by direct quadrature on an
/// `n^d` grid; independent of the convolution assembly. Used by tests.
pub fn galerkin_element_quadrature(field: &FlowField, epsilon: f64, row: &[i64], col: &[i64], n: usize) -> C64 {
    let d = field.dimension();
    let h = TWO_PI / n as f64;
    let total = n.pow(d as u32);
    let k2: f64 = col.iter().map(|v| (v * v) as f64).sum();
    let mut acc = C64::new(0.0, 0.0);
    for idx in 0..total {
        let mut x = vec![0.0; d];
        let mut r = idx;
        for xi in x.iter_mut() {
            *xi = (r % n) as f64 * h;
            r /= n;
        }
        let v = field.eval(&x).expect("dimension checked");
        let ph_col: f64 = col.iter().zip(&x).map(|(a, b)| *a as f64 * b).sum();
        let ph_row: f64 = row.iter().zip(&x).map(|(a, b)| *a as f64 * b).sum();
        // (1/i) V·∇ e^{ikx} = (Σ_j k_j v_j) e^{ikx};  iεΔ e^{ikx} = −iε|k|² e^{ikx}
        let adv: f64 = col.iter().zip(&v).map(|(a, b)| *a as f64 * b).sum();
        let val = C64::new(adv, -epsilon * k2) * C64::from_polar(1.0, ph_col - ph_row);
        acc += val;
    }
    acc / total as f64
}
