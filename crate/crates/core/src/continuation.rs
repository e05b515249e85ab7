//! Vanishing-viscosity continuation: spectra along a decreasing ε schedule,
//! greedy branch matching, and polynomial extrapolation of each branch to
//! ε = 0.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{
    assemble_flow_generator_with, assemble_noisy_koopman_with, AssemblyOptions, FourierTruncation, OperatorMatrix,
};
use crate::eigen::{dense_spectrum_with, DenseOptions, ResonanceSet, Window};
use crate::linalg::C64;
use crate::models::{FlowField, MapSystem};
use crate::{Error, Result};

/// Squared-mass fraction on the outer shells above which an eigenvector is
/// treated as a truncation artifact.
pub const CONTAMINATION_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug)]
pub enum SpectralSystem {
    Flow(FlowField),
    Map(MapSystem),
}

impl SpectralSystem {
    pub fn dimension(&self) -> usize {
        match self {
            SpectralSystem::Flow(f) => f.dimension(),
            SpectralSystem::Map(_) => 2,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            SpectralSystem::Flow(f) => f.name(),
            SpectralSystem::Map(m) => m.name(),
        }
    }

    pub fn assemble(&self, epsilon: f64, trunc: FourierTruncation, opts: &AssemblyOptions) -> Result<OperatorMatrix> {
        match self {
            SpectralSystem::Flow(f) => assemble_flow_generator_with(f, epsilon, trunc, opts),
            SpectralSystem::Map(m) => assemble_noisy_koopman_with(m, epsilon, trunc, opts),
        }
    }
}

/// How the Fourier cutoff follows ε.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KPolicy {
    Fixed(usize),
    /// `K = max(min_k, ceil(4/√ε))`, capped so that `(2K+1)^d` stays within
    /// `dense_limit`.
    Adaptive { min_k: usize, dense_limit: usize },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Adaptive { min_k: 8, dense_limit: 4096 }
    }
}

impl KPolicy {
    pub fn k_for(&self, epsilon: f64, dim: usize) -> usize {
        match *self {
            KPolicy::Fixed(k) => k,
            KPolicy::Adaptive { min_k, dense_limit } => {
                let want = ((4.0 / epsilon.sqrt()).ceil() as usize).max(min_k);
                let mut k = want;
                while k > 0 && (2 * k + 1).pow(dim as u32) > dense_limit {
                    k -= 1;
                }
                k
            }
        }
    }
}

/// Geometric schedule `start, start·ratio, …` with `points` entries.
pub fn geometric_schedule(start: f64, ratio: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| start * ratio.powi(i as i32)).collect()
}

/// Six points from 0.2 with ratio ½.
pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(0.2, 0.5, 6)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    Converged,
    BoundaryContaminated,
    /// Fit residual above `1e−3` of the branch diameter.
    NonSmooth,
    /// Fewer than three points; no extrapolation attempted.
    Short,
    /// Terminated before the finest ε.
    Lost,
}

impl BranchStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchStatus::Converged => "converged",
            BranchStatus::BoundaryContaminated => "boundary_contaminated",
            BranchStatus::NonSmooth => "non_smooth",
            BranchStatus::Short => "short",
            BranchStatus::Lost => "lost",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: usize,
    /// Decreasing.
    pub epsilons: Vec<f64>,
    pub values: Vec<C64>,
    pub residuals: Vec<f64>,
    pub contaminated: Vec<bool>,
    pub extrapolated: Option<C64>,
    pub extrapolation_order: usize,
    pub residual_of_fit: f64,
    pub status: BranchStatus,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> C64 {
        *self.values.last().expect("branches are never empty")
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for a in &self.values {
            for b in &self.values {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Value at `epsilon` if the branch visits it.
    pub fn value_at(&self, epsilon: f64) -> Option<C64> {
        self.epsilons.iter().position(|&e| e == epsilon).map(|i| self.values[i])
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub k_policy: KPolicy,
    pub dense_limit: usize,
    pub contamination_threshold: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { k_policy: KPolicy::default(), dense_limit: 4096, contamination_threshold: CONTAMINATION_THRESHOLD }
    }
}

/// Windowed spectrum at one ε with per-eigenvalue contamination flags.
#[derive(Clone, Debug)]
pub struct SweepLevel {
    pub epsilon: f64,
    pub truncation: FourierTruncation,
    pub spectrum: ResonanceSet,
    pub contaminated: Vec<bool>,
}

impl SweepLevel {
    pub fn clean_count(&self) -> usize {
        self.contaminated.iter().filter(|c| !**c).count()
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub system: String,
    pub window: Window,
    pub levels: Vec<SweepLevel>,
    pub branches: Vec<Branch>,
}

impl SweepResult {
    /// Non-contaminated eigenvalues in the window at each ε.
    pub fn window_counts(&self) -> Vec<(f64, usize)> {
        self.levels.iter().map(|l| (l.epsilon, l.clean_count())).collect()
    }

    /// CSV rows `branch_id,epsilon,re,im,residual,status`.
    pub fn write_branches_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "branch_id,epsilon,re,im,residual,status")?;
        for b in &self.branches {
            for i in 0..b.len() {
                writeln!(
                    w,
                    "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    b.id,
                    b.epsilons[i],
                    b.values[i].re,
                    b.values[i].im,
                    b.residuals[i],
                    b.status.as_str()
                )?;
            }
        }
        Ok(())
    }

    pub fn summaries(&self) -> Vec<BranchSummary> {
        self.branches.iter().map(BranchSummary::from).collect()
    }
}

/// Serializable per-branch summary.
#[derive(Clone, Debug, Serialize)]
pub struct BranchSummary {
    pub branch_id: usize,
    pub points: usize,
    pub status: BranchStatus,
    pub extrapolated_re: Option<f64>,
    pub extrapolated_im: Option<f64>,
    pub extrapolation_order: usize,
    pub residual_of_fit: f64,
}

impl From<&Branch> for BranchSummary {
    fn from(b: &Branch) -> Self {
        BranchSummary {
            branch_id: b.id,
            points: b.len(),
            status: b.status,
            extrapolated_re: b.extrapolated.map(|z| z.re),
            extrapolated_im: b.extrapolated.map(|z| z.im),
            extrapolation_order: b.extrapolation_order,
            residual_of_fit: b.residual_of_fit,
        }
    }
}

/// True when some vector carries at least `threshold` of its squared mass
/// on modes with `|k|_∞ ≥ K − 1`.
pub fn boundary_contamination(trunc: &FourierTruncation, vectors: &[Vec<C64>], threshold: f64) -> bool {
    vectors.iter().any(|v| trunc.boundary_mass(v, 1) >= threshold)
}

/// Spectra at every ε (computed in parallel), restricted to `window`, then
/// chained into branches.
pub fn sweep(system: &SpectralSystem, schedule: &[f64], window: Window, opts: &SweepOptions) -> Result<SweepResult> {
    if schedule.is_empty() {
        return Err(Error::arg("ε schedule is empty"));
    }
    if schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::arg("every ε in the schedule must be positive and finite"));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("ε schedule must be strictly decreasing"));
    }
    let d = system.dimension();
    let asm = AssemblyOptions { dense_limit: opts.dense_limit, ..Default::default() };
    let dense = DenseOptions { dense_limit: opts.dense_limit, ..Default::default() };
    let levels: Vec<SweepLevel> = schedule
        .par_iter()
        .map(|&eps| -> Result<SweepLevel> {
            let k = opts.k_policy.k_for(eps, d);
            let trunc = FourierTruncation::new(d, k)?;
            let op = system.assemble(eps, trunc, &asm)?;
            let spectrum = dense_spectrum_with(&op, &dense)?.restrict(window);
            let contaminated = spectrum
                .right_vectors
                .as_ref()
                .expect("dense spectra carry vectors")
                .iter()
                .map(|v| trunc.boundary_mass(v, 1) >= opts.contamination_threshold)
                .collect();
            Ok(SweepLevel { epsilon: eps, truncation: trunc, spectrum, contaminated })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut branches = match_branches(&levels);
    for b in branches.iter_mut() {
        finalize_branch(b, *schedule.last().unwrap());
    }
    Ok(SweepResult { system: system.name().to_string(), window, levels, branches })
}

struct Candidate {
    dist: f64,
    step: f64,
    value: C64,
    branch: usize,
    eig: usize,
}

/// Greedy nearest-neighbour chaining across consecutive levels.
fn match_branches(levels: &[SweepLevel]) -> Vec<Branch> {
    let mut branches: Vec<Branch> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    for level in levels {
        let ev = &level.spectrum.eigenvalues;
        let mut cands = Vec::new();
        for &bi in &active {
            let b = &branches[bi];
            let last = b.last();
            let (pred, cap) = if b.len() >= 2 {
                let n = b.len();
                let prev = b.values[n - 2];
                let (e1, e0) = (b.epsilons[n - 1], b.epsilons[n - 2]);
                let slope = (last - prev) / (e1 - e0);
                let pred = last + slope * (level.epsilon - e1);
                let cap = (5.0 * (last - prev).norm()).max(1e-8 * (1.0 + last.norm()));
                (pred, cap)
            } else {
                (last, 0.5)
            };
            for (ei, &z) in ev.iter().enumerate() {
                let dist = (z - pred).norm();
                if dist <= cap {
                    cands.push(Candidate { dist, step: (z - last).norm(), value: z, branch: bi, eig: ei });
                }
            }
        }
        cands.sort_by(|a, b| {
            let primary = if (a.dist - b.dist).abs() <= 1e-10 { std::cmp::Ordering::Equal } else { a.dist.total_cmp(&b.dist) };
            primary
                .then(a.step.total_cmp(&b.step))
                .then(a.value.re.total_cmp(&b.value.re))
                .then(a.value.im.total_cmp(&b.value.im))
                .then(a.branch.cmp(&b.branch))
        });
        let mut eig_used = vec![false; ev.len()];
        let mut branch_used = vec![false; branches.len()];
        let mut next_active = Vec::new();
        for c in cands {
            if eig_used[c.eig] || branch_used[c.branch] {
                continue;
            }
            eig_used[c.eig] = true;
            branch_used[c.branch] = true;
            let b = &mut branches[c.branch];
            b.epsilons.push(level.epsilon);
            b.values.push(c.value);
            b.residuals.push(level.spectrum.residuals[c.eig]);
            b.contaminated.push(level.contaminated[c.eig]);
            next_active.push(c.branch);
        }
        for (ei, used) in eig_used.iter().enumerate() {
            if !used {
                let id = branches.len();
                branches.push(Branch {
                    id,
                    epsilons: vec![level.epsilon],
                    values: vec![ev[ei]],
                    residuals: vec![level.spectrum.residuals[ei]],
                    contaminated: vec![level.contaminated[ei]],
                    extrapolated: None,
                    extrapolation_order: 0,
                    residual_of_fit: 0.0,
                    status: BranchStatus::Short,
                });
                next_active.push(id);
            }
        }
        next_active.sort_unstable();
        active = next_active;
    }
    branches
}

fn finalize_branch(b: &mut Branch, finest: f64) {
    if *b.epsilons.last().unwrap() != finest {
        b.status = BranchStatus::Lost;
        return;
    }
    if b.len() < 3 {
        b.status = if b.contaminated.iter().any(|c| *c) { BranchStatus::BoundaryContaminated } else { BranchStatus::Short };
        return;
    }
    let fit = extrapolate_points(&b.epsilons, &b.values).expect("three or more points");
    b.extrapolated = Some(fit.value);
    b.extrapolation_order = fit.order;
    b.residual_of_fit = fit.residual;
    b.status = if b.contaminated.iter().any(|c| *c) {
        BranchStatus::BoundaryContaminated
    } else if fit.residual > 1e-3 * b.diameter() && fit.residual > 1e-12 * (1.0 + fit.value.norm()) {
        BranchStatus::NonSmooth
    } else {
        BranchStatus::Converged
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    pub value: C64,
    pub order: usize,
    /// Largest absolute fit residual over the samples.
    pub residual: f64,
}

/// Extrapolate a branch to ε = 0; updates nothing, see [`Branch`] fields for
/// the values recorded by [`sweep`].
pub fn extrapolate(branch: &Branch) -> Result<Extrapolation> {
    if branch.status == BranchStatus::Lost {
        return Err(Error::precondition("cannot extrapolate a lost branch"));
    }
    extrapolate_points(&branch.epsilons, &branch.values)
}

/// Least-squares fit `λ(ε) = λ₀ + c₁ε + … + c_p ε^p` for `p ∈ 1..=3` with at
/// least one spare degree of freedom. The lowest order whose RMS residual
/// sits at round-off level wins; otherwise the order with the smallest RMS
/// residual, preferring lower orders within a factor of two.
pub fn extrapolate_points(eps: &[f64], values: &[C64]) -> Result<Extrapolation> {
    if eps.len() != values.len() {
        return Err(Error::arg("ε and value lists differ in length"));
    }
    if eps.len() < 3 {
        return Err(Error::precondition(format!("extrapolation needs at least 3 points, got {}", eps.len())));
    }
    let scale_eps = eps.iter().cloned().fold(0.0, f64::max);
    let x: Vec<f64> = eps.iter().map(|e| e / scale_eps).collect();
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut fits = Vec::new();
    for order in 1..=3usize {
        if eps.len() < order + 2 {
            break;
        }
        let re: Vec<f64> = values.iter().map(|z| z.re).collect();
        let im: Vec<f64> = values.iter().map(|z| z.im).collect();
        let cre = poly_lstsq(&x, &re, order);
        let cim = poly_lstsq(&x, &im, order);
        let mut ss = 0.0;
        let mut worst = 0.0f64;
        for (i, xi) in x.iter().enumerate() {
            let fr = horner(&cre, *xi);
            let fi = horner(&cim, *xi);
            let r = (C64::new(fr, fi) - values[i]).norm();
            ss += r * r;
            worst = worst.max(r);
        }
        let rms = (ss / (eps.len() - order - 1) as f64).sqrt();
        fits.push((order, C64::new(cre[0], cim[0]), rms, worst));
    }
    let pick = if let Some(f) = fits.iter().find(|f| f.2 <= 1e-13 * scale) {
        *f
    } else {
        let best = fits.iter().map(|f| f.2).fold(f64::INFINITY, f64::min);
        *fits.iter().find(|f| f.2 <= 2.0 * best).expect("at least the minimizer qualifies")
    };
    Ok(Extrapolation { value: pick.1, order: pick.0, residual: pick.3 })
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Polynomial least squares via Householder QR of the Vandermonde matrix.
fn poly_lstsq(x: &[f64], y: &[f64], order: usize) -> Vec<f64> {
    let m = x.len();
    let n = order + 1;
    let mut a: Vec<Vec<f64>> = x.iter().map(|xi| (0..n).map(|p| xi.powi(p as i32)).collect()).collect();
    let mut b = y.to_vec();
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|t| t * t).sum();
        if vv == 0.0 {
            continue;
        }
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * a[i][j]).sum::<f64>() * 2.0 / vv;
            for i in k..m {
                a[i][j] -= s * v[i - k];
            }
        }
        let s: f64 = (k..m).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vv;
        for i in k..m {
            b[i] -= s * v[i - k];
        }
    }
    let mut c = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * c[j]).sum();
        c[k] = (b[k] - s) / a[k][k];
    }
    c
}

/// Resonance-free strip and compact-box counts.
#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    /// Lower edge of the strip, `−½(γ̂₀ − δ)`.
    pub strip_depth: f64,
    /// Extrapolated limits of converged branches with `|Re λ| > R` and
    /// `Im λ ∈ (−½(γ̂₀−δ), −real_axis_band)`.
    pub strip_count_limits: usize,
    /// Raw (non-contaminated) eigenvalue counts in the same strip at the two
    /// finest ε, finest last.
    pub strip_counts_finest: Vec<usize>,
    pub strip_zero_and_stable: bool,
    /// Non-contaminated eigenvalues in `[−R, R] × [−½(γ̂₀−δ), 0]` per ε.
    pub box_counts: Vec<(f64, usize)>,
    pub box_stable_finest: bool,
}

/// Width of the band below the real axis excluded from the strip count.
pub const REAL_AXIS_BAND: f64 = 1e-6;

pub fn gap_diagnostic(sweep: &SweepResult, gamma0: f64, delta: f64, r: f64) -> GapReport {
    let depth = -0.5 * (gamma0 - delta);
    let in_strip = |z: &C64| z.re.abs() > r && z.im > depth && z.im < -REAL_AXIS_BAND;
    let in_box = |z: &C64| z.re.abs() <= r && z.im >= depth && z.im <= 0.0;
    let strip_count_limits = sweep
        .branches
        .iter()
        .filter(|b| b.status == BranchStatus::Converged)
        .filter_map(|b| b.extrapolated)
        .filter(in_strip)
        .count();
    let count_level = |l: &SweepLevel, pred: &dyn Fn(&C64) -> bool| {
        l.spectrum.eigenvalues.iter().zip(&l.contaminated).filter(|(z, c)| !**c && pred(z)).count()
    };
    let finest: Vec<&SweepLevel> = sweep.levels.iter().rev().take(2).collect::<Vec<_>>().into_iter().rev().collect();
    let strip_counts_finest: Vec<usize> = finest.iter().map(|l| count_level(l, &in_strip)).collect();
    let box_counts: Vec<(f64, usize)> = sweep.levels.iter().map(|l| (l.epsilon, count_level(l, &in_box))).collect();
    let n = box_counts.len();
    let box_stable_finest = n < 2 || box_counts[n - 1].1 == box_counts[n - 2].1;
    let strip_zero_and_stable = strip_count_limits == 0 && strip_counts_finest.windows(2).all(|w| w[0] == w[1]);
    GapReport {
        strip_depth: depth,
        strip_count_limits,
        strip_counts_finest,
        strip_zero_and_stable,
        box_counts,
        box_stable_finest,
    }
}

/// Koopman analog of the strip: eigenvalues with `|λ| ∈ (e^{−γ̂₀/2}, 1)`
/// other than the unit eigenvalue.
pub fn modulus_gap_count(rs: &ResonanceSet, gamma0: f64) -> usize {
    let lo = (-0.5 * gamma0).exp();
    rs.eigenvalues
        .iter()
        .filter(|z| (*z - C64::new(1.0, 0.0)).norm() > 1e-8 && z.norm() > lo && z.norm() < 1.0 + 1e-12)
        .count()
}

/// Eigenvalues above the parabola `Im λ > −ε |Re λ|² / C₀`.
pub fn parabola_count(rs: &ResonanceSet, epsilon: f64, c0: f64) -> usize {
    rs.eigenvalues.iter().filter(|z| z.im > -epsilon * z.re * z.re / c0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn adaptive_k_policy() {
        let p = KPolicy::default();
        assert_eq!(p.k_for(0.2, 2), 9);
        assert_eq!(p.k_for(1.0, 2), 8);
        // capped by (2K+1)² ≤ 4096
        assert_eq!(p.k_for(1e-4, 2), 31);
        assert_eq!(KPolicy::Fixed(6).k_for(1e-6, 2), 6);
    }

    #[test]
    fn default_schedule_shape() {
        let s = default_schedule();
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], 0.2);
        assert_eq!(s[5], 0.2 / 32.0);
    }

    #[test]
    fn linear_branch_extrapolates_exactly() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let vals: Vec<C64> = eps.iter().map(|e| c(2.0, -4.0 * e)).collect();
        let f = extrapolate_points(&eps, &vals).unwrap();
        assert_eq!(f.order, 1);
        assert!((f.value - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn quadratic_branch_needs_order_two() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let truth = c(0.3, -0.2);
        let vals: Vec<C64> = eps.iter().map(|&e| truth + c(1.0, 1.0) * e + 2.0 * e * e).collect();
        let f = extrapolate_points(&eps, &vals).unwrap();
        assert_eq!(f.order, 2);
        assert!((f.value - truth).norm() < 1e-8);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(extrapolate_points(&[0.1, 0.05], &[c(0.0, 0.0); 2]), Err(Error::Precondition(_))));
    }

    #[test]
    fn contamination_flags_boundary_modes() {
        let t = FourierTruncation::new(1, 16).unwrap();
        let unit = |k: i64| {
            let mut v = vec![c(0.0, 0.0); t.size()];
            v[t.index_of(&[k]).unwrap()] = c(1.0, 0.0);
            v
        };
        assert!(!boundary_contamination(&t, &[unit(2)], CONTAMINATION_THRESHOLD));
        assert!(boundary_contamination(&t, &[unit(16)], CONTAMINATION_THRESHOLD));
        assert!(boundary_contamination(&t, &[unit(-15)], CONTAMINATION_THRESHOLD));
    }

    #[test]
    fn rejects_bad_schedules() {
        let sys = SpectralSystem::Flow(FlowField::rotation());
        let w = Window::new(-1.0, 1.0, -1.0, 0.0).unwrap();
        let o = SweepOptions::default();
        assert!(sweep(&sys, &[0.1, 0.2], w, &o).is_err());
        assert!(sweep(&sys, &[0.1, -0.05], w, &o).is_err());
        assert!(sweep(&sys, &[], w, &o).is_err());
    }

    #[test]
    fn empty_window_gives_no_branches() {
        let sys = SpectralSystem::Flow(FlowField::rotation());
        let w = Window::new(0.2, 0.8, -1.0, 0.1).unwrap();
        let r = sweep(&sys, &[0.2, 0.1, 0.05], w, &SweepOptions::default()).unwrap();
        assert!(r.branches.is_empty());
    }
}
