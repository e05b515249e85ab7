//! Spectral projectors by trapezoidal quadrature of the resolvent on a
//! circle, plus eigenfunction extraction from their ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{FourierTruncation, OperatorMatrix, Storage};
use crate::continuation::SpectralSystem;
use crate::eigen::{eig, schur, storage_norm, DenseOptions, ResonanceSet, Resolvent};
use crate::linalg::{dotu, norm2, CMatrix, DenseLu, Factorization, C64};
use crate::models::TWO_PI;
use crate::{Error, Result};

/// Acceptance tolerance for `|trace − m|` and `‖Π² − Π‖`.
pub const PROJECTOR_TOLERANCE: f64 = 1e-6;

/// Default number of quadrature nodes.
pub const DEFAULT_NODES: usize = 32;

#[derive(Clone, Debug)]
pub struct Projector {
    pub matrix: CMatrix,
    pub center: C64,
    pub radius: f64,
    pub nodes: usize,
    pub trace: C64,
    pub rank_estimate: usize,
    /// `‖Π² − Π‖₂` (power-iteration estimate).
    pub idempotency_defect: f64,
    /// `‖ΠM − MΠ‖₂ / ‖M‖`.
    pub commutator_defect: f64,
}

impl Projector {
    /// Integer trace with negligible imaginary part and small idempotency
    /// defect.
    pub fn accepted(&self) -> bool {
        (self.trace.re - self.rank_estimate as f64).abs() <= PROJECTOR_TOLERANCE
            && self.trace.im.abs() <= 1e-8
            && self.idempotency_defect <= PROJECTOR_TOLERANCE
    }

    pub fn summary(&self) -> ProjectorSummary {
        ProjectorSummary {
            center_re: self.center.re,
            center_im: self.center.im,
            radius: self.radius,
            nodes: self.nodes,
            trace_re: self.trace.re,
            trace_im: self.trace.im,
            rank: self.rank_estimate,
            idempotency_defect: self.idempotency_defect,
            commutator_defect: self.commutator_defect,
            accepted: self.accepted(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectorSummary {
    pub center_re: f64,
    pub center_im: f64,
    pub radius: f64,
    pub nodes: usize,
    pub trace_re: f64,
    pub trace_im: f64,
    pub rank: usize,
    pub idempotency_defect: f64,
    pub commutator_defect: f64,
    pub accepted: bool,
}

/// Refuse contours with an eigenvalue inside the annulus
/// `| |λ − c| − r | < 0.1 r`.
pub fn check_annulus(rs: &ResonanceSet, center: C64, radius: f64) -> Result<()> {
    for l in &rs.eigenvalues {
        let gap = ((l - center).norm() - radius).abs();
        if gap < 0.1 * radius {
            return Err(Error::precondition(format!(
                "eigenvalue {l} lies within 10% of the contour |λ − {center}| = {radius}; change the radius"
            )));
        }
    }
    Ok(())
}

/// Half the distance from `center` to the nearest eigenvalue farther than
/// `enclose` from it, floored at `1e−3`.
pub fn auto_radius(rs: &ResonanceSet, center: C64, enclose: f64) -> f64 {
    let nearest_out = rs
        .eigenvalues
        .iter()
        .map(|l| (l - center).norm())
        .filter(|d| *d > enclose)
        .fold(f64::INFINITY, f64::min);
    if nearest_out.is_finite() {
        (0.5 * (nearest_out + enclose)).max(1e-3)
    } else {
        enclose.max(1e-3) * 2.0
    }
}

/// `Π ≈ (1/M) Σ_j r e^{iθ_j} (λ_j − M)^{−1}` with `λ_j = c + r e^{iθ_j}`.
/// Nodes are solved in parallel and summed in node order.
pub fn contour_projector(op: &OperatorMatrix, center: C64, radius: f64, nodes: usize) -> Result<Projector> {
    projector_from_storage(&op.storage, center, radius, nodes)
}

/// As [`contour_projector`], first checking the contour against a known
/// spectrum.
pub fn contour_projector_checked(
    op: &OperatorMatrix,
    center: C64,
    radius: f64,
    nodes: usize,
    prior: &ResonanceSet,
) -> Result<Projector> {
    check_annulus(prior, center, radius)?;
    contour_projector(op, center, radius, nodes)
}

pub fn projector_from_storage(storage: &Storage, center: C64, radius: f64, nodes: usize) -> Result<Projector> {
    if nodes < 8 {
        return Err(Error::arg(format!("contour quadrature needs at least 8 nodes, got {nodes}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::arg("contour radius must be positive and finite"));
    }
    let n = match storage {
        Storage::Dense(m) => m.rows(),
        Storage::Sparse(m) => m.rows(),
    };
    let contributions: Vec<Result<CMatrix>> = (0..nodes)
        .into_par_iter()
        .map(|j| {
            let theta = TWO_PI * j as f64 / nodes as f64;
            let e = C64::from_polar(1.0, theta);
            let lambda = center + radius * e;
            let res = Resolvent::from_storage(storage, lambda);
            if res.near_singular() {
                return Err(Error::precondition(format!(
                    "resolvent is near-singular at contour node {lambda} (condition {:.2e}); an eigenvalue sits on the contour, change the radius",
                    res.condition_estimate()
                )));
            }
            let w = radius * e / nodes as f64;
            let mut block = CMatrix::zeros(n, n);
            let mut unit = vec![C64::new(0.0, 0.0); n];
            for col in 0..n {
                unit[col] = C64::new(1.0, 0.0);
                let sol = res.solve(&unit)?;
                unit[col] = C64::new(0.0, 0.0);
                for (i, v) in sol.solution.iter().enumerate() {
                    block[(i, col)] = w * v;
                }
            }
            Ok(block)
        })
        .collect();
    let mut pi = CMatrix::zeros(n, n);
    for c in contributions {
        pi = pi.add(&c?);
    }
    let trace: C64 = pi.diagonal().iter().sum();
    let rank = trace.re.round().max(0.0) as usize;
    let idem = pi.matmul(&pi).sub(&pi).norm2_est();
    let m = match storage {
        Storage::Dense(m) => m.clone(),
        Storage::Sparse(s) => s.to_dense(),
    };
    let mn = storage_norm(storage);
    let comm = pi.matmul(&m).sub(&m.matmul(&pi)).norm2_est() / mn.max(f64::MIN_POSITIVE);
    Ok(Projector {
        matrix: pi,
        center,
        radius,
        nodes,
        trace,
        rank_estimate: rank,
        idempotency_defect: idem,
        commutator_defect: comm,
    })
}

/// Right/left eigenvectors for the eigenvalue group inside a projector.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<C64>,
    /// Right eigenvectors; for a defective group, the Jordan chain
    /// `u₁, u₂, …` with `(M − μ)u_{k+1} = u_k`.
    pub right: Vec<Vec<C64>>,
    /// Left vectors normalized so that `Σ_k v_k u_k = 1` (bilinear pairing).
    /// Empty for defective groups.
    pub left: Vec<Vec<C64>>,
    /// `max |vᵢᵀ u_j − δ_ij|` after the diagonal normalization.
    pub biorthogonality_defect: f64,
    pub defective: bool,
    pub chain_length: usize,
}

fn orthonormal_columns(mut cols: Vec<Vec<C64>>) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for v in cols.iter_mut() {
        for _ in 0..2 {
            for q in &out {
                let p = crate::linalg::dotc(q, v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let nv = norm2(v);
        if nv > 1e-10 {
            out.push(v.iter().map(|z| z / nv).collect());
        }
    }
    out
}

/// Orthonormal basis of `range(P)` from `P` applied to seeded random vectors.
fn range_basis(p: &CMatrix, rank: usize, seed: u64) -> Vec<Vec<C64>> {
    let n = p.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<C64>> = (0..rank + 2)
        .map(|_| {
            let x: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            p.matvec(&x)
        })
        .collect();
    let mut q = orthonormal_columns(probes);
    q.truncate(rank);
    q
}

/// Rayleigh–Ritz on `span(Q)`: returns `Qᴴ A Q`.
fn compress(a: &CMatrix, q: &[Vec<C64>]) -> CMatrix {
    let aq: Vec<Vec<C64>> = q.iter().map(|v| a.matvec(v)).collect();
    CMatrix::from_fn(q.len(), q.len(), |i, j| crate::linalg::dotc(&q[i], &aq[j]))
}

fn lift(q: &[Vec<C64>], y: &[C64]) -> Vec<C64> {
    let n = q[0].len();
    let mut u = vec![C64::new(0.0, 0.0); n];
    for (qj, c) in q.iter().zip(y) {
        for (ui, qi) in u.iter_mut().zip(qj) {
            *ui += c * qi;
        }
    }
    u
}

/// One inverse-iteration polish of `u` near `mu`.
fn polish(a: &CMatrix, mu: C64, u: &[C64]) -> Vec<C64> {
    let scale = a.max_abs().max(1.0);
    let lu = DenseLu::new(&a.shifted(mu + C64::new(1e-10 * scale, 0.0)));
    if lu.is_singular() {
        return u.to_vec();
    }
    let x = lu.solve(u);
    let nx = norm2(&x);
    if !nx.is_finite() || nx == 0.0 {
        return u.to_vec();
    }
    x.into_iter().map(|z| z / nx).collect()
}

/// Eigenvectors spanning the range of an accepted projector.
pub fn eigenfunctions(op: &OperatorMatrix, projector: &Projector) -> Result<EigenPairs> {
    eigenfunctions_dense(&op.to_dense(), projector)
}

pub fn eigenfunctions_dense(a: &CMatrix, projector: &Projector) -> Result<EigenPairs> {
    if !projector.accepted() || projector.rank_estimate == 0 {
        return Err(Error::precondition(format!(
            "projector not accepted (trace {}, idempotency defect {:.2e})",
            projector.trace, projector.idempotency_defect
        )));
    }
    let m = projector.rank_estimate;
    let q = range_basis(&projector.matrix, m, 0xb10c);
    if q.len() < m {
        return Err(Error::solver("projector range has lower rank than its trace"));
    }
    let b = compress(a, &q);
    let small = eig(&b, &DenseOptions { tolerance: 1e-6, ..Default::default() })?;
    if small.defective.iter().any(|d| *d) {
        // single Jordan chain from the Schur form of the compressed block
        let s = schur(&b)?;
        let mu = s.t[(0, 0)];
        let mut chain = vec![lift(&q, &s.z.column(0))];
        for k in 1..m {
            let t = s.t[(k - 1, k)];
            let scale = if t.norm() > 1e-14 { C64::new(1.0, 0.0) / t } else { C64::new(1.0, 0.0) };
            let col: Vec<C64> = s.z.column(k).iter().map(|z| z * scale).collect();
            chain.push(lift(&q, &col));
        }
        return Ok(EigenPairs {
            values: vec![mu; m],
            right: chain,
            left: Vec::new(),
            biorthogonality_defect: f64::NAN,
            defective: true,
            chain_length: m,
        });
    }
    let right: Vec<Vec<C64>> =
        small.values.iter().zip(&small.right).map(|(mu, y)| polish(a, *mu, &lift(&q, y))).collect();

    // left vectors: range of Πᵀ is the left invariant subspace (wᵀA = λwᵀ)
    let at = a.transpose();
    let ql = range_basis(&projector.matrix.transpose(), m, 0x1ef7);
    let bl = compress(&at, &ql);
    let small_l = eig(&bl, &DenseOptions { tolerance: 1e-6, ..Default::default() })?;
    let mut left_raw: Vec<(C64, Vec<C64>)> =
        small_l.values.iter().zip(&small_l.right).map(|(mu, y)| (*mu, polish(&at, *mu, &lift(&ql, y)))).collect();
    // pair left with right by eigenvalue proximity
    let mut left = Vec::with_capacity(m);
    for mu in &small.values {
        let (idx, _) = left_raw
            .iter()
            .enumerate()
            .map(|(i, (l, _))| (i, (l - mu).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("same group size");
        left.push(left_raw.remove(idx).1);
    }
    for (w, u) in left.iter_mut().zip(&right) {
        let p = dotu(w, u);
        if p.norm() > 0.0 {
            for z in w.iter_mut() {
                *z /= p;
            }
        }
    }
    let mut defect = 0.0f64;
    for (i, w) in left.iter().enumerate() {
        for (j, u) in right.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((dotu(w, u) - target).norm());
        }
    }
    if defect > 1e-8 {
        // coincident eigenvalues mix inside the group
        biorthonormalize(&mut left, &right);
    }
    Ok(EigenPairs {
        values: small.values,
        right,
        left,
        biorthogonality_defect: defect,
        defective: false,
        chain_length: 1,
    })
}

/// Replace `W` by `W G^{−T}` with `G = Wᵀ U`, so that `Wᵀ U = I`.
/// Returns false (leaving `left` untouched) when `G` is singular.
pub fn biorthonormalize(left: &mut Vec<Vec<C64>>, right: &[Vec<C64>]) -> bool {
    let m = left.len();
    if m == 0 {
        return true;
    }
    let n = left[0].len();
    let g = CMatrix::from_fn(m, m, |i, j| dotu(&left[i], &right[j]));
    let lu = DenseLu::new(&g);
    if lu.is_singular() {
        return false;
    }
    // row r of W G^{−T} solves G x = (row r of W)
    let mut cols: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; m];
    for r in 0..n {
        let row: Vec<C64> = left.iter().map(|w| w[r]).collect();
        for (k, v) in lu.solve(&row).into_iter().enumerate() {
            cols[k][r] = v;
        }
    }
    *left = cols;
    true
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub epsilon_1: f64,
    pub epsilon_2: f64,
    /// `‖Π_{ε₁} − Π_{ε₂}‖₂`.
    pub difference: f64,
    pub ratio: f64,
    pub trace_1_re: f64,
    pub trace_2_re: f64,
}

/// Projector change between two viscosities on a shared contour and
/// truncation.
pub fn projector_continuity(
    system: &SpectralSystem,
    trunc: FourierTruncation,
    center: C64,
    radius: f64,
    eps1: f64,
    eps2: f64,
    nodes: usize,
) -> Result<ContinuityReport> {
    if eps1 == eps2 {
        return Err(Error::arg("projector continuity needs two distinct ε"));
    }
    let asm = Default::default();
    let mut projs = Vec::new();
    for eps in [eps1, eps2] {
        let op = system.assemble(eps, trunc, &asm)?;
        let rs = crate::eigen::dense_spectrum(&op)?;
        check_annulus(&rs, center, radius)?;
        projs.push(contour_projector(&op, center, radius, nodes)?);
    }
    let difference = projs[0].matrix.sub(&projs[1].matrix).norm2_est();
    Ok(ContinuityReport {
        epsilon_1: eps1,
        epsilon_2: eps2,
        difference,
        ratio: difference / (eps1 - eps2).abs(),
        trace_1_re: projs[0].trace.re,
        trace_2_re: projs[1].trace.re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_flow_generator;
    use crate::models::FlowField;

    fn rotation(eps: f64) -> OperatorMatrix {
        assemble_flow_generator(&FlowField::rotation(), eps, FourierTruncation::new(1, 8).unwrap()).unwrap()
    }

    #[test]
    fn isolated_mode_projector() {
        let op = rotation(0.01);
        let p = contour_projector(&op, C64::new(2.0, 0.0), 0.3, 32).unwrap();
        assert!((p.trace - C64::new(1.0, 0.0)).norm() < 1e-8);
        assert!(p.accepted());
        let i2 = op.truncation.index_of(&[2]).unwrap();
        assert!((p.matrix[(i2, i2)] - C64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn two_modes_inside() {
        let op = rotation(0.01);
        // modes k = 1 and 4 sit at 1.5 r from the center, so the trapezoid
        // error is (1/1.5)^M; 64 nodes bring it below 1e−11
        let p = contour_projector(&op, C64::new(2.5, 0.0), 1.0, 64).unwrap();
        assert!((p.trace - C64::new(2.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn empty_contour() {
        let op = rotation(0.01);
        let p = contour_projector(&op, C64::new(2.5, 0.0), 0.2, 32).unwrap();
        assert!(p.trace.norm() < 1e-8);
        assert!(p.matrix.norm2_est() < 1e-8);
    }

    #[test]
    fn contour_through_eigenvalue_fails() {
        let op = rotation(0.0);
        let err = contour_projector(&op, C64::new(1.0, 0.0), 1.0, 8).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn annulus_check() {
        let op = rotation(0.01);
        let rs = crate::eigen::dense_spectrum(&op).unwrap();
        assert!(check_annulus(&rs, C64::new(2.0, 0.0), 0.3).is_ok());
        assert!(check_annulus(&rs, C64::new(2.0, 0.0), 1.05).is_err());
    }

    #[test]
    fn rotation_mode_eigenfunctions() {
        let op = rotation(0.01);
        let p = contour_projector(&op, C64::new(2.0, 0.0), 0.3, 32).unwrap();
        let e = eigenfunctions(&op, &p).unwrap();
        assert_eq!(e.values.len(), 1);
        assert!((e.values[0] - C64::new(2.0, -0.04)).norm() < 1e-10);
        let i2 = op.truncation.index_of(&[2]).unwrap();
        assert!((e.right[0][i2].norm() - 1.0).abs() < 1e-10);
        assert!((dotu(&e.left[0], &e.right[0]) - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_projector_is_viscosity_independent() {
        let sys = SpectralSystem::Flow(FlowField::rotation());
        let t = FourierTruncation::new(1, 8).unwrap();
        let r = projector_continuity(&sys, t, C64::new(2.0, 0.0), 0.3, 0.02, 0.01, 32).unwrap();
        assert!(r.difference < 1e-10);
    }
}
