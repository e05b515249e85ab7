//! Correlation functions: semigroup evolution `e^{−itM}`, the bilinear
//! correlation pairing, resonance-expansion reconstruction and Langevin
//! Monte-Carlo estimates of `E[f(x(t))]`.
//!
//! The pairing is bilinear throughout, `⟨a, g⟩ = Σ_k a_k ĝ_{−k}`, which is
//! the discrete form of `∫ a g dμ` without complex conjugation.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assembly::{assemble_flow_generator, FourierTruncation, OperatorKind, OperatorMatrix, Storage};
use crate::eigen::ResonanceSet;
use crate::linalg::{expm, expm_krylov_action, pairwise_sum, pairwise_sum_real, CMatrix, KrylovExpmOptions, C64};
use crate::models::{wrap_angle, FlowField, TrigPoly};
use crate::projector::biorthonormalize;
use crate::{Error, Result};

type Evaluator = Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>;

/// An observable: Fourier coefficients on a truncation, a closed-form
/// evaluator, or both.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub truncation: Option<FourierTruncation>,
    pub coefficients: Vec<C64>,
    evaluator: Option<Evaluator>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("truncation", &self.truncation)
            .field("closed_form", &self.evaluator.is_some())
            .finish()
    }
}

impl Observable {
    pub fn from_coefficients(name: impl Into<String>, trunc: FourierTruncation, coefficients: Vec<C64>) -> Result<Self> {
        if coefficients.len() != trunc.size() {
            return Err(Error::arg(format!(
                "{} coefficients for a truncation of size {}",
                coefficients.len(),
                trunc.size()
            )));
        }
        Ok(Observable { name: name.into(), truncation: Some(trunc), coefficients, evaluator: None })
    }

    /// Real trigonometric polynomial; keeps an exact evaluator alongside the
    /// coefficients.
    pub fn from_poly(name: impl Into<String>, trunc: FourierTruncation, p: &TrigPoly) -> Result<Self> {
        if p.max_harmonic() as usize > trunc.k_max {
            return Err(Error::arg("observable harmonics exceed the truncation"));
        }
        let coefficients = trunc.coefficients_of(p)?;
        let q = p.clone();
        Ok(Observable {
            name: name.into(),
            truncation: Some(trunc),
            coefficients,
            evaluator: Some(Arc::new(move |x| C64::new(q.eval(x), 0.0))),
        })
    }

    /// The mode `e^{ik·x}`.
    pub fn mode(trunc: FourierTruncation, k: &[i64]) -> Result<Self> {
        let i = trunc.index_of(k).ok_or_else(|| Error::arg(format!("mode {k:?} lies outside the truncation")))?;
        let mut c = vec![C64::new(0.0, 0.0); trunc.size()];
        c[i] = C64::new(1.0, 0.0);
        let kk = k.to_vec();
        Ok(Observable {
            name: format!("mode{k:?}"),
            truncation: Some(trunc),
            coefficients: c,
            evaluator: Some(Arc::new(move |x| {
                C64::from_polar(1.0, kk.iter().zip(x).map(|(a, b)| *a as f64 * b).sum::<f64>())
            })),
        })
    }

    /// Closed-form evaluator only (Monte-Carlo on R³ or on tori).
    pub fn closed_form(name: impl Into<String>, f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static) -> Self {
        Observable { name: name.into(), truncation: None, coefficients: Vec::new(), evaluator: Some(Arc::new(f)) }
    }

    pub fn has_coefficients(&self) -> bool {
        self.truncation.is_some()
    }

    /// Point value: the closed form when present, else the Fourier sum.
    pub fn eval(&self, x: &[f64]) -> Result<C64> {
        if let Some(f) = &self.evaluator {
            return Ok(f(x));
        }
        self.eval_fourier(x)
    }

    pub fn eval_fourier(&self, x: &[f64]) -> Result<C64> {
        let t = self.truncation.ok_or_else(|| Error::arg(format!("observable {} has no coefficients", self.name)))?;
        Ok(t.evaluate(&self.coefficients, x))
    }

    /// `ĉ_{−k} = conj(ĉ_k)` to the given tolerance.
    pub fn is_real(&self, tol: f64) -> bool {
        match self.truncation {
            None => false,
            Some(t) => (0..t.size()).all(|i| (self.coefficients[t.reflect(i)] - self.coefficients[i].conj()).norm() <= tol),
        }
    }

    fn coefficients_on(&self, trunc: &FourierTruncation) -> Result<&[C64]> {
        match self.truncation {
            Some(t) if t == *trunc => Ok(&self.coefficients),
            Some(t) => Err(Error::arg(format!(
                "observable {} lives on K={} d={}, operator on K={} d={}",
                self.name, t.k_max, t.dim, trunc.k_max, trunc.dim
            ))),
            None => Err(Error::arg(format!("observable {} has no Fourier coefficients", self.name))),
        }
    }
}

/// `Σ_k a_k g_{−k}` on a truncation.
pub fn pairing(trunc: &FourierTruncation, a: &[C64], g: &[C64]) -> C64 {
    let terms: Vec<C64> = (0..trunc.size()).map(|i| a[i] * g[trunc.reflect(i)]).collect();
    pairwise_sum(&terms)
}

fn require_generator(op: &OperatorMatrix) -> Result<()> {
    if op.kind != OperatorKind::FlowGenerator {
        return Err(Error::arg("semigroup evolution needs a flow generator"));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::arg("evolution time must be finite"));
    }
    if t < 0.0 {
        return Err(Error::arg(format!(
            "t = {t} < 0 runs the viscous semigroup backwards, which is ill-posed; only t ≥ 0 is supported"
        )));
    }
    Ok(())
}

fn minus_i_t(m: &CMatrix, t: f64) -> CMatrix {
    m.scaled(C64::new(0.0, -t))
}

/// `e^{−itM} v` on raw coefficients.
fn evolve_vec(op: &OperatorMatrix, v: &[C64], t: f64) -> Result<Vec<C64>> {
    if t == 0.0 {
        return Ok(v.to_vec());
    }
    match &op.storage {
        Storage::Dense(m) => Ok(expm(&minus_i_t(m, t)).matvec(v)),
        Storage::Sparse(s) => {
            let apply = |x: &[C64]| s.matvec(x).into_iter().map(|z| C64::new(z.im, -z.re)).collect::<Vec<_>>();
            expm_krylov_action(&apply, v, t, KrylovExpmOptions::default())
        }
    }
}

/// `e^{−itM} f` for `t ≥ 0`.
pub fn evolve(op: &OperatorMatrix, f: &Observable, t: f64) -> Result<Observable> {
    require_generator(op)?;
    check_time(t)?;
    let c = f.coefficients_on(&op.truncation)?;
    let out = evolve_vec(op, c, t)?;
    Observable::from_coefficients(format!("{}@t", f.name), op.truncation, out)
}

/// Evolved coefficient vectors on an increasing time grid. Dense operators
/// reuse one exponential per distinct increment.
pub fn evolve_grid(op: &OperatorMatrix, f: &Observable, times: &[f64]) -> Result<Vec<Vec<C64>>> {
    require_generator(op)?;
    check_grid(times)?;
    let c = f.coefficients_on(&op.truncation)?.to_vec();
    let mut out = Vec::with_capacity(times.len());
    let mut cur = c;
    let mut t_prev = 0.0;
    let mut cache: Vec<(f64, CMatrix)> = Vec::new();
    for &t in times {
        let dt = t - t_prev;
        if dt > 0.0 {
            cur = match &op.storage {
                Storage::Dense(m) => {
                    let pos = cache.iter().position(|(d, _)| (d - dt).abs() <= 1e-14 * dt.max(1.0));
                    let e = match pos {
                        Some(p) => &cache[p].1,
                        None => {
                            cache.push((dt, expm(&minus_i_t(m, dt))));
                            &cache.last().unwrap().1
                        }
                    };
                    e.matvec(&cur)
                }
                Storage::Sparse(_) => evolve_vec(op, &cur, dt)?,
            };
        }
        out.push(cur.clone());
        t_prev = t;
    }
    Ok(out)
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::arg("time grid is empty"));
    }
    check_time(times[0])?;
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("time grid must be finite and strictly increasing"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSource {
    Semigroup,
    Expansion,
    MonteCarlo,
    KoopmanPowers,
}

impl TraceSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceSource::Semigroup => "semigroup",
            TraceSource::Expansion => "expansion",
            TraceSource::MonteCarlo => "monte_carlo",
            TraceSource::KoopmanPowers => "koopman_powers",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceMeta {
    pub epsilon: f64,
    pub k_max: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTrace {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub source: TraceSource,
    /// Standard errors of the real and imaginary parts (Monte-Carlo only).
    pub stderr: Option<Vec<C64>>,
    pub meta: TraceMeta,
}

impl CorrelationTrace {
    /// CSV columns `t,re,im,stderr_re,stderr_im,source`; the stderr columns
    /// are empty for deterministic traces.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re,im,stderr_re,stderr_im,source")?;
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            let se = match &self.stderr {
                Some(s) => format!("{:.16e},{:.16e}", s[i].re, s[i].im),
                None => ",".to_string(),
            };
            writeln!(w, "{t:.16e},{:.16e},{:.16e},{se},{}", v.re, v.im, self.source.as_str())?;
        }
        Ok(())
    }
}

/// `C(t) = ⟨e^{−itM} f, g⟩`; with `mean_subtract` the `k = 0` term is
/// removed.
pub fn correlation(
    op: &OperatorMatrix,
    f: &Observable,
    g: &Observable,
    times: &[f64],
    mean_subtract: bool,
) -> Result<CorrelationTrace> {
    let gc = g.coefficients_on(&op.truncation)?;
    let evolved = evolve_grid(op, f, times)?;
    let zero = op.truncation.index_of(&vec![0; op.truncation.dim]).expect("k = 0 is always kept");
    let values = evolved
        .iter()
        .map(|a| {
            let mut c = pairing(&op.truncation, a, gc);
            if mean_subtract {
                c -= a[zero] * gc[zero];
            }
            c
        })
        .collect();
    Ok(CorrelationTrace {
        times: times.to_vec(),
        values,
        source: TraceSource::Semigroup,
        stderr: None,
        meta: TraceMeta { epsilon: op.epsilon, k_max: Some(op.truncation.k_max), ..Default::default() },
    })
}

/// Discrete-time correlation `⟨Kⁿ f, g⟩` for `n = 0..=steps`.
pub fn koopman_correlation(
    op: &OperatorMatrix,
    f: &Observable,
    g: &Observable,
    steps: usize,
    mean_subtract: bool,
) -> Result<CorrelationTrace> {
    if op.kind != OperatorKind::NoisyKoopman {
        return Err(Error::arg("discrete correlations need a noisy Koopman operator"));
    }
    let mut a = f.coefficients_on(&op.truncation)?.to_vec();
    let gc = g.coefficients_on(&op.truncation)?;
    let zero = op.truncation.index_of(&[0, 0]).expect("k = 0 is always kept");
    let mut values = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        if n > 0 {
            a = op.apply(&a)?;
        }
        let mut c = pairing(&op.truncation, &a, gc);
        if mean_subtract {
            c -= a[zero] * gc[zero];
        }
        values.push(c);
    }
    Ok(CorrelationTrace {
        times: (0..=steps).map(|n| n as f64).collect(),
        values,
        source: TraceSource::KoopmanPowers,
        stderr: None,
        meta: TraceMeta { epsilon: op.epsilon, k_max: Some(op.truncation.k_max), ..Default::default() },
    })
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    pub expansion: CorrelationTrace,
    pub reference: CorrelationTrace,
    /// Eigenvalues with `Im λ > −A` used in the sum.
    pub included: Vec<C64>,
    /// In-window eigenvalues skipped because their cluster is defective.
    pub excluded_defective: usize,
    pub max_abs_error: f64,
    /// Fit `|C − C_exp| ≈ c e^{−rate·t}` on the tail half of the grid.
    pub fitted_prefactor: f64,
    /// `+∞` when the tail residual sits at round-off level.
    pub decay_rate: f64,
}

/// Resonance expansion `C_exp(t) = Σ_{Im λ_j > −A} e^{−itλ_j} (v_jᵀ f) ⟨u_j, g⟩`
/// from a dense spectrum with left and right vectors, compared with the
/// semigroup correlation on the same grid.
pub fn expansion_reconstruct(
    op: &OperatorMatrix,
    rs: &ResonanceSet,
    f: &Observable,
    g: &Observable,
    times: &[f64],
    a: f64,
) -> Result<ExpansionReport> {
    let trunc = op.truncation;
    let fc = f.coefficients_on(&trunc)?;
    let gc = g.coefficients_on(&trunc)?;
    let (right, left) = match (&rs.right_vectors, &rs.left_vectors) {
        (Some(r), Some(l)) => (r, l),
        _ => {
            let missing: Vec<String> =
                rs.eigenvalues.iter().filter(|z| z.im > -a).map(|z| format!("{z}")).collect();
            return Err(Error::precondition(format!(
                "eigenvector data missing for in-window eigenvalues [{}]",
                missing.join(", ")
            )));
        }
    };
    let idx: Vec<usize> = (0..rs.len()).filter(|&i| rs.eigenvalues[i].im > -a).collect();
    let scale = rs.eigenvalues.iter().map(|z| z.norm()).fold(1.0, f64::max);
    // clusters of (numerically) equal eigenvalues are biorthonormalized together
    let mut used = vec![false; idx.len()];
    let mut terms: Vec<(C64, C64)> = Vec::new();
    let mut included = Vec::new();
    let mut excluded_defective = 0;
    for p in 0..idx.len() {
        if used[p] {
            continue;
        }
        let lam = rs.eigenvalues[idx[p]];
        let members: Vec<usize> =
            (p..idx.len()).filter(|&q| !used[q] && (rs.eigenvalues[idx[q]] - lam).norm() <= 1e-8 * scale).collect();
        for &q in &members {
            used[q] = true;
        }
        if members.iter().any(|&q| rs.defective[idx[q]]) {
            excluded_defective += members.len();
            continue;
        }
        let u: Vec<Vec<C64>> = members.iter().map(|&q| right[idx[q]].clone()).collect();
        let mut w: Vec<Vec<C64>> = members.iter().map(|&q| left[idx[q]].clone()).collect();
        if !biorthonormalize(&mut w, &u) {
            return Err(Error::precondition(format!("left and right eigenvectors near {lam} are not biorthogonalizable")));
        }
        for (uj, wj) in u.iter().zip(&w) {
            let coef_f: C64 = crate::linalg::dotu(wj, fc);
            let coef_g = pairing(&trunc, uj, gc);
            terms.push((rs.eigenvalues[idx[members[0]]], coef_f * coef_g));
            included.push(rs.eigenvalues[idx[members[0]]]);
        }
    }
    let values: Vec<C64> = times
        .iter()
        .map(|&t| {
            let parts: Vec<C64> = terms.iter().map(|(l, c)| (C64::new(0.0, -t) * l).exp() * c).collect();
            pairwise_sum(&parts)
        })
        .collect();
    let reference = correlation(op, f, g, times, false)?;
    let resid: Vec<f64> = values.iter().zip(&reference.values).map(|(a, b)| (a - b).norm()).collect();
    let max_abs_error = resid.iter().cloned().fold(0.0, f64::max);
    let c_scale = reference.values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (fitted_prefactor, decay_rate) = fit_tail_decay(times, &resid, 1e-13 * c_scale);
    Ok(ExpansionReport {
        expansion: CorrelationTrace {
            times: times.to_vec(),
            values,
            source: TraceSource::Expansion,
            stderr: None,
            meta: reference.meta.clone(),
        },
        reference,
        included,
        excluded_defective,
        max_abs_error,
        fitted_prefactor,
        decay_rate,
    })
}

/// Least-squares fit of `log r = log c − rate·t` to the upper envelope of
/// the residual. The tail is the second half of the range where `r` is above
/// `floor`; within it the local maxima are fitted (all resolved samples when
/// there are fewer than three), so oscillation between modes does not bias
/// the rate.
fn fit_tail_decay(times: &[f64], r: &[f64], floor: f64) -> (f64, f64) {
    let Some(last) = r.iter().rposition(|v| *v > floor) else {
        return (0.0, f64::INFINITY);
    };
    let start = last / 2;
    let resolved: Vec<usize> = (start..=last).filter(|&i| r[i] > floor).collect();
    let peaks: Vec<usize> = resolved
        .iter()
        .cloned()
        .filter(|&i| (i == start || r[i] >= r[i - 1]) && (i == last || r[i] >= r[i + 1]))
        .collect();
    let use_idx = if peaks.len() >= 3 { peaks } else { resolved };
    if use_idx.len() < 2 {
        return (0.0, f64::INFINITY);
    }
    let pts: Vec<(f64, f64)> = use_idx.iter().map(|&i| (times[i], r[i].ln())).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    ((my - slope * mt).exp(), -slope)
}

// ---------------------------------------------------------------------------
// Langevin Monte-Carlo

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub times: Vec<f64>,
    pub mean: Vec<C64>,
    pub stderr: Vec<C64>,
    pub paths_used: usize,
    /// Paths dropped after a non-finite or escaping state.
    pub excluded: usize,
}

impl McEstimate {
    pub fn to_trace(&self, epsilon: f64, cfg: &McConfig) -> CorrelationTrace {
        CorrelationTrace {
            times: self.times.clone(),
            values: self.mean.clone(),
            source: TraceSource::MonteCarlo,
            stderr: Some(self.stderr.clone()),
            meta: TraceMeta { epsilon, k_max: None, paths: Some(cfg.paths), seed: Some(cfg.seed), dt: Some(cfg.dt) },
        }
    }
}

/// States beyond this radius on R³ count as escaped.
pub const ESCAPE_RADIUS: f64 = 1e6;

/// Independent RNG stream for one path.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// One Euler–Maruyama step of `dx = −V dt + √(2ε) dB`.
fn em_step(field: &FlowField, x: &mut [f64], dt: f64, noise: f64, rng: &mut ChaCha8Rng) {
    let v = field.eval_unchecked(x);
    for (xi, vi) in x.iter_mut().zip(&v) {
        let xi_n: f64 = StandardNormal.sample(rng);
        *xi += -vi * dt + noise * xi_n;
    }
    if field.is_torus() {
        for xi in x.iter_mut() {
            *xi = wrap_angle(*xi);
        }
    }
}

fn steps_for(times: &[f64], dt: f64) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let s = (t / dt).round();
            if (s * dt - t).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::arg(format!("time {t} is not a multiple of dt = {dt}")));
            }
            Ok(s as usize)
        })
        .collect()
}

/// Euler–Maruyama ensemble estimate of `E[f(x(t))]` with per-path streams
/// `(seed, path_index)` and fixed-order reductions, so the result does not
/// depend on the thread count.
pub fn langevin_sample(
    field: &FlowField,
    epsilon: f64,
    x0: &[f64],
    f: &Observable,
    times: &[f64],
    cfg: &McConfig,
) -> Result<McEstimate> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::arg("dt must be positive"));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::arg("epsilon must be nonnegative"));
    }
    if x0.len() != field.dimension() {
        return Err(Error::arg("initial point has the wrong dimension"));
    }
    if cfg.paths < 2 {
        return Err(Error::arg("Monte-Carlo needs at least two paths"));
    }
    check_grid(times)?;
    f.eval(x0)?;
    let steps = steps_for(times, cfg.dt)?;
    let noise = (2.0 * epsilon * cfg.dt).sqrt();
    let samples: Vec<Option<Vec<C64>>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, p);
            let mut x = x0.to_vec();
            let mut done = 0usize;
            let mut out = Vec::with_capacity(times.len());
            for &s in &steps {
                while done < s {
                    em_step(field, &mut x, cfg.dt, noise, &mut rng);
                    done += 1;
                    if x.iter().any(|v| !v.is_finite() || v.abs() > ESCAPE_RADIUS) {
                        return None;
                    }
                }
                out.push(f.eval(&x).ok()?);
            }
            Some(out)
        })
        .collect();
    let kept: Vec<&Vec<C64>> = samples.iter().flatten().collect();
    let excluded = cfg.paths - kept.len();
    if kept.len() < 2 {
        return Err(Error::Evaluation(format!("only {} of {} paths stayed finite", kept.len(), cfg.paths)));
    }
    let n = kept.len() as f64;
    let mut mean = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let vals: Vec<C64> = kept.iter().map(|v| v[ti]).collect();
        let m = pairwise_sum(&vals) / n;
        let var_re = pairwise_sum_real(&vals.iter().map(|z| (z.re - m.re).powi(2)).collect::<Vec<_>>()) / (n - 1.0);
        let var_im = pairwise_sum_real(&vals.iter().map(|z| (z.im - m.im).powi(2)).collect::<Vec<_>>()) / (n - 1.0);
        mean.push(m);
        stderr.push(C64::new((var_re / n).sqrt(), (var_im / n).sqrt()));
    }
    Ok(McEstimate { times: times.to_vec(), mean, stderr, paths_used: kept.len(), excluded })
}

/// A single Euler–Maruyama path sampled every `stride` steps (the initial
/// point included). Escape stops the path early.
pub fn langevin_trajectory(
    field: &FlowField,
    epsilon: f64,
    x0: &[f64],
    dt: f64,
    steps: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(dt > 0.0) || stride == 0 {
        return Err(Error::arg("dt must be positive and stride nonzero"));
    }
    if x0.len() != field.dimension() {
        return Err(Error::arg("initial point has the wrong dimension"));
    }
    let noise = (2.0 * epsilon * dt).sqrt();
    let mut rng = path_rng(seed, 0);
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for s in 1..=steps {
        em_step(field, &mut x, dt, noise, &mut rng);
        if x.iter().any(|v| !v.is_finite() || v.abs() > ESCAPE_RADIUS) {
            break;
        }
        if s % stride == 0 {
            out.push(x.clone());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct McComparison {
    pub times: Vec<f64>,
    pub operator: Vec<C64>,
    pub monte_carlo: McEstimate,
    /// `max(|Δre|/se_re, |Δim|/se_im)` per time.
    pub z_scores: Vec<f64>,
}

impl McComparison {
    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().cloned().fold(0.0, f64::max)
    }
}

fn z_score(d: f64, se: f64) -> f64 {
    if se > 0.0 {
        d.abs() / se
    } else if d.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Operator evolution evaluated at `x0` against Langevin Monte-Carlo.
pub fn mc_vs_operator(
    field: &FlowField,
    f: &Observable,
    epsilon: f64,
    x0: &[f64],
    times: &[f64],
    cfg: &McConfig,
) -> Result<McComparison> {
    let trunc = f.truncation.ok_or_else(|| Error::arg("observable needs Fourier coefficients for the operator side"))?;
    let op = assemble_flow_generator(field, epsilon, trunc)?;
    let evolved = evolve_grid(&op, f, times)?;
    let operator: Vec<C64> = evolved.iter().map(|c| trunc.evaluate(c, x0)).collect();
    let mc = langevin_sample(field, epsilon, x0, f, times, cfg)?;
    let z_scores = operator
        .iter()
        .zip(mc.mean.iter().zip(&mc.stderr))
        .map(|(o, (m, s))| z_score(o.re - m.re, s.re).max(z_score(o.im - m.im, s.im)))
        .collect();
    Ok(McComparison { times: times.to_vec(), operator, monte_carlo: mc, z_scores })
}
