//! Trajectory diagnostics: Lyapunov exponents by the QR (Benettin) method,
//! the unstable-Jacobian growth rate γ₀, Poincaré sections with refined
//! crossings, and paired deterministic/Langevin trajectories.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::SpectralSystem;
use crate::correlation::langevin_trajectory;
use crate::models::{FlowField, TWO_PI};
use crate::{Error, Result};

/// Default bounding radius for trajectories on R³.
pub const DEFAULT_BOUND: f64 = 50.0;

fn rk4_step(field: &FlowField, x: &[f64], h: f64, sign: f64) -> Vec<f64> {
    let f = |y: &[f64]| -> Vec<f64> { field.eval_unchecked(y).into_iter().map(|v| sign * v).collect() };
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, h / 2.0));
    let k3 = f(&add(x, &k2, h / 2.0));
    let k4 = f(&add(x, &k3, h));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// RK4 step of the variational system `x' = V(x)`, `Y' = DV(x) Y`.
fn rk4_variational(field: &FlowField, x: &[f64], y: &[Vec<f64>], h: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = x.len();
    // y[c] is column c of the frame
    let rhs = |xs: &[f64], ys: &[Vec<f64>]| -> (Vec<f64>, Vec<Vec<f64>>) {
        let v = field.eval_unchecked(xs);
        let j = field.jacobian_unchecked(xs);
        let dy = ys.iter().map(|col| (0..d).map(|r| (0..d).map(|c| j[r][c] * col[c]).sum()).collect()).collect();
        (v, dy)
    };
    let shift = |xs: &[f64], ys: &[Vec<f64>], kx: &[f64], ky: &[Vec<f64>], s: f64| {
        let nx: Vec<f64> = xs.iter().zip(kx).map(|(a, b)| a + s * b).collect();
        let ny: Vec<Vec<f64>> =
            ys.iter().zip(ky).map(|(col, kc)| col.iter().zip(kc).map(|(a, b)| a + s * b).collect()).collect();
        (nx, ny)
    };
    let (k1x, k1y) = rhs(x, y);
    let (a, b) = shift(x, y, &k1x, &k1y, h / 2.0);
    let (k2x, k2y) = rhs(&a, &b);
    let (a, b) = shift(x, y, &k2x, &k2y, h / 2.0);
    let (k3x, k3y) = rhs(&a, &b);
    let (a, b) = shift(x, y, &k3x, &k3y, h);
    let (k4x, k4y) = rhs(&a, &b);
    let nx = (0..d).map(|i| x[i] + h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])).collect();
    let ny = (0..d)
        .map(|c| (0..d).map(|i| y[c][i] + h / 6.0 * (k1y[c][i] + 2.0 * k2y[c][i] + 2.0 * k3y[c][i] + k4y[c][i])).collect())
        .collect();
    (nx, ny)
}

/// Modified Gram–Schmidt on the frame columns; returns `log R_ii`.
fn reorthonormalize(frame: &mut [Vec<f64>]) -> Vec<f64> {
    let d = frame.len();
    let mut logs = vec![0.0; d];
    for c in 0..d {
        for p in 0..c {
            let (done, rest) = frame.split_at_mut(c);
            let dot: f64 = done[p].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
            for (v, q) in rest[0].iter_mut().zip(&done[p]) {
                *v -= dot * q;
            }
        }
        let n = frame[c].iter().map(|v| v * v).sum::<f64>().sqrt();
        logs[c] = n.ln();
        for v in frame[c].iter_mut() {
            *v /= n;
        }
    }
    logs
}

#[derive(Clone, Copy, Debug)]
pub struct LyapunovOptions {
    /// Map iterations, or flow time divided by `dt`.
    pub steps: usize,
    /// Steps between re-orthonormalizations.
    pub renorm_every: usize,
    /// Steps whose stretching is discarded while the frame aligns.
    pub transient: usize,
    /// Flow time step (ignored for maps).
    pub dt: f64,
    pub bound: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions { steps: 20_000, renorm_every: 1, transient: 200, dt: 1e-2, bound: DEFAULT_BOUND }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    /// Descending.
    pub exponents: Vec<f64>,
    /// Convergence estimate per exponent: three batch-means standard errors,
    /// with the batch variance taken from the last quarter of the horizon.
    pub drift: Vec<f64>,
    /// Trajectory left the bounding box; the estimate is truncated.
    pub escaped: bool,
    pub steps_used: usize,
}

/// Batches in the last quarter used for the convergence estimate.
pub const DRIFT_BATCHES: usize = 16;

/// Lyapunov spectrum by the QR method: exact Jacobian products for maps,
/// RK4 on the variational equation for flows.
pub fn lyapunov_spectrum(system: &SpectralSystem, x0: &[f64], opts: &LyapunovOptions) -> Result<LyapunovReport> {
    let d = system.dimension();
    if x0.len() != d {
        return Err(Error::arg(format!("initial point has dimension {}, system {d}", x0.len())));
    }
    if opts.renorm_every == 0 || opts.steps < 4 * opts.renorm_every {
        return Err(Error::arg("horizon must span several renormalization intervals"));
    }
    if let SpectralSystem::Flow(_) = system {
        if !(opts.dt > 0.0) {
            return Err(Error::arg("flow time step must be positive"));
        }
    }
    let unit = match system {
        SpectralSystem::Flow(_) => opts.dt,
        SpectralSystem::Map(_) => 1.0,
    };
    let mut x = x0.to_vec();
    let mut frame: Vec<Vec<f64>> = (0..d).map(|c| (0..d).map(|r| if r == c { 1.0 } else { 0.0 }).collect()).collect();
    let mut sums = vec![0.0; d];
    // last quarter split into equal batches of stretching sums
    let quarter_start = opts.steps - opts.steps / 4;
    let batch_len = (opts.steps / 4 / DRIFT_BATCHES).max(opts.renorm_every);
    let mut batches: Vec<Vec<f64>> = Vec::new();
    let mut escaped = false;
    let total = opts.transient + opts.steps;
    let mut counted = 0usize;
    for step in 1..=total {
        match system {
            SpectralSystem::Map(m) => {
                let j = m.jacobian(&x)?;
                for col in frame.iter_mut() {
                    let a = j[0][0] * col[0] + j[0][1] * col[1];
                    let b = j[1][0] * col[0] + j[1][1] * col[1];
                    col[0] = a;
                    col[1] = b;
                }
                let y = m.apply(&x)?;
                x = y.to_vec();
            }
            SpectralSystem::Flow(f) => {
                let (nx, ny) = rk4_variational(f, &x, &frame, opts.dt);
                x = nx;
                frame = ny;
                if !f.is_torus() && x.iter().map(|v| v * v).sum::<f64>().sqrt() > opts.bound {
                    escaped = true;
                }
            }
        }
        if step % opts.renorm_every == 0 || escaped {
            let logs = reorthonormalize(&mut frame);
            if step > opts.transient {
                for (s, l) in sums.iter_mut().zip(&logs) {
                    *s += l;
                }
                let prev = counted;
                counted = step - opts.transient;
                if prev >= quarter_start {
                    let b = (prev - quarter_start) / batch_len;
                    if b >= batches.len() {
                        batches.push(vec![0.0; d]);
                    }
                    for (acc, l) in batches[b].iter_mut().zip(&logs) {
                        *acc += l;
                    }
                }
            }
        }
        if escaped {
            break;
        }
    }
    if counted == 0 {
        return Err(Error::Evaluation("trajectory escaped during the transient".into()));
    }
    // only complete batches enter the variance
    let full = (counted.saturating_sub(quarter_start)) / batch_len;
    batches.truncate(full);
    let mut exps: Vec<(f64, f64)> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e = s / (counted as f64 * unit);
            let drift = if batches.len() >= 2 {
                let rates: Vec<f64> = batches.iter().map(|b| b[i] / (batch_len as f64 * unit)).collect();
                let mean = rates.iter().sum::<f64>() / rates.len() as f64;
                let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rates.len() - 1) as f64;
                3.0 * (var * batch_len as f64 / counted as f64).sqrt()
            } else {
                f64::INFINITY
            };
            (e, drift)
        })
        .collect();
    exps.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(LyapunovReport {
        exponents: exps.iter().map(|e| e.0).collect(),
        drift: exps.iter().map(|e| e.1).collect(),
        escaped,
        steps_used: counted,
    })
}

/// Exponents above this count as positive.
pub const POSITIVE_EXPONENT: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct Gamma0Report {
    pub gamma0: f64,
    /// Sum of positive exponents per seed, in seed order.
    pub per_seed: Vec<f64>,
    pub spread: f64,
    pub escaped_seeds: usize,
    /// Seeds whose exponents do not sum to ≈ 0 (volume change or poor
    /// convergence); informational.
    pub unbalanced_seeds: usize,
}

/// `γ̂₀ = min_seeds Σ_{λ_i > 0} λ_i`.
pub fn gamma0_estimate(system: &SpectralSystem, seeds: &[Vec<f64>], opts: &LyapunovOptions) -> Result<Gamma0Report> {
    if seeds.is_empty() {
        return Err(Error::arg("γ₀ needs at least one seed"));
    }
    let reports: Vec<LyapunovReport> =
        seeds.par_iter().map(|s| lyapunov_spectrum(system, s, opts)).collect::<Result<Vec<_>>>()?;
    gamma0_from_reports(&reports)
}

/// [`gamma0_estimate`] from spectra already computed, in seed order.
pub fn gamma0_from_reports(reports: &[LyapunovReport]) -> Result<Gamma0Report> {
    if reports.is_empty() {
        return Err(Error::arg("γ₀ needs at least one seed"));
    }
    let per_seed: Vec<f64> =
        reports.iter().map(|r| r.exponents.iter().filter(|e| **e > POSITIVE_EXPONENT).sum()).collect();
    if per_seed.contains(&0.0) {
        return Err(Error::precondition(format!(
            "no positive exponents detected (largest exponent {:.3e}); the system is not hyperbolic on these seeds",
            reports.iter().map(|r| r.exponents[0]).fold(f64::NEG_INFINITY, f64::max)
        )));
    }
    let gamma0 = per_seed.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = per_seed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Gamma0Report {
        gamma0,
        spread: max - gamma0,
        escaped_seeds: reports.iter().filter(|r| r.escaped).count(),
        unbalanced_seeds: reports.iter().filter(|r| r.exponents.iter().sum::<f64>().abs() > 1e-3).count(),
        per_seed,
    })
}

// ---------------------------------------------------------------------------
// Poincaré sections

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    Upward,
    Downward,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Plane {
    pub coord: usize,
    pub level: f64,
    pub direction: CrossingDirection,
}

#[derive(Clone, Copy, Debug)]
pub struct SectionOptions {
    pub dt: f64,
    /// Per-seed time budget.
    pub max_time: f64,
    pub bound: f64,
    pub tol: f64,
}

impl Default for SectionOptions {
    fn default() -> Self {
        SectionOptions { dt: 1e-3, max_time: 1e5, bound: DEFAULT_BOUND, tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedCrossings {
    pub seed: Vec<f64>,
    /// Full state at each refined crossing (torus coordinates reduced).
    pub points: Vec<Vec<f64>>,
    pub escaped: bool,
    pub out_of_time: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectionCrossings {
    pub plane: Plane,
    pub seeds: Vec<SeedCrossings>,
}

impl SectionCrossings {
    pub fn total(&self) -> usize {
        self.seeds.iter().map(|s| s.points.len()).sum()
    }

    /// One row per crossing: seed index, seed class (empty when not
    /// given), crossing index and the full refined state.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, classes: &[Option<SeedClass>]) -> std::io::Result<()> {
        let d = self.seeds.first().map(|s| s.seed.len()).unwrap_or(0);
        let coords: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(w, "seed,class,crossing,{}", coords.join(","))?;
        for (i, s) in self.seeds.iter().enumerate() {
            let class = classes.get(i).copied().flatten().map(|c| c.as_str()).unwrap_or("");
            for (j, p) in s.points.iter().enumerate() {
                let vals: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{i},{class},{j},{}", vals.join(","))?;
            }
        }
        Ok(())
    }
}

/// Crossing count of the plane coordinate: sign for R³, the sheet index
/// `floor((x − level)/2π)` for torus coordinates.
fn sheet(x: f64, level: f64, torus: bool) -> f64 {
    if torus {
        ((x - level) / TWO_PI).floor()
    } else if x >= level {
        0.0
    } else {
        -1.0
    }
}

/// Section of the forward flow. Crossings are found by sign (or sheet)
/// changes between fixed RK4 steps and refined by bisection on the
/// sub-step length; integration continues from the unrefined step.
pub fn poincare_section(
    field: &FlowField,
    plane: Plane,
    seeds: &[Vec<f64>],
    n_crossings: usize,
    opts: &SectionOptions,
) -> Result<SectionCrossings> {
    let d = field.dimension();
    if plane.coord >= d {
        return Err(Error::arg(format!("plane coordinate {} outside dimension {d}", plane.coord)));
    }
    if seeds.iter().any(|s| s.len() != d) {
        return Err(Error::arg("seed dimension differs from the field dimension"));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::arg("dt must be positive"));
    }
    let torus = field.is_torus();
    let results: Vec<SeedCrossings> = seeds
        .par_iter()
        .map(|seed| {
            let mut x = seed.clone();
            let mut points = Vec::new();
            let mut escaped = false;
            let max_steps = (opts.max_time / opts.dt).ceil() as usize;
            let mut steps = 0usize;
            while points.len() < n_crossings {
                if steps >= max_steps {
                    break;
                }
                steps += 1;
                let next = rk4_step(field, &x, opts.dt, 1.0);
                if !torus && next.iter().map(|v| v * v).sum::<f64>().sqrt() > opts.bound
                    || next.iter().any(|v| !v.is_finite())
                {
                    escaped = true;
                    break;
                }
                let s0 = sheet(x[plane.coord], plane.level, torus);
                let s1 = sheet(next[plane.coord], plane.level, torus);
                if s0 != s1 {
                    let up = s1 > s0;
                    let wanted = match plane.direction {
                        CrossingDirection::Both => true,
                        CrossingDirection::Upward => up,
                        CrossingDirection::Downward => !up,
                    };
                    if wanted {
                        let target = if torus { plane.level + TWO_PI * s0.max(s1) } else { plane.level };
                        let (mut lo, mut hi) = (0.0, opts.dt);
                        let glo = x[plane.coord] - target;
                        let mut p = next.clone();
                        for _ in 0..200 {
                            let mid = 0.5 * (lo + hi);
                            let pm = rk4_step(field, &x, mid, 1.0);
                            let gm = pm[plane.coord] - target;
                            p = pm;
                            if gm.abs() <= opts.tol {
                                break;
                            }
                            if (gm < 0.0) == (glo < 0.0) {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        if torus {
                            for v in p.iter_mut() {
                                *v = crate::models::wrap_angle(*v);
                            }
                        }
                        points.push(p);
                    }
                }
                x = next;
            }
            let out_of_time = !escaped && points.len() < n_crossings;
            SeedCrossings { seed: seed.clone(), points, escaped, out_of_time }
        })
        .collect();
    Ok(SectionCrossings { plane, seeds: results })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedClass {
    /// Points fill a 2D region (chaotic sea).
    Scatter,
    /// Points lie on a curve or a finite set (island / periodic orbit).
    Curve,
}

impl SeedClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeedClass::Scatter => "scatter",
            SeedClass::Curve => "curve",
        }
    }
}

/// Neighbours used by the local dimension estimate.
pub const DIMENSION_NEIGHBOURS: usize = 20;

/// Median over points of the maximum-likelihood local dimension
/// `[(1/(k−1)) Σ_{j<k} log(r_k/r_j)]⁻¹` from the `k` nearest-neighbour
/// distances (Levina–Bickel): about 1 on a curve, about 2 on an area.
/// Returns 0 when the points collapse onto a finite set.
pub fn local_dimension(points: &[[f64; 2]]) -> Option<f64> {
    let k = DIMENSION_NEIGHBOURS;
    if points.len() <= 2 * k {
        return None;
    }
    let mut dims: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .collect();
            r.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
            r.truncate(k + 1);
            r.sort_by(|a, b| a.total_cmp(b));
            let rk = r[k - 1];
            if rk < 1e-9 {
                return 0.0;
            }
            let s: f64 = r[..k - 1].iter().map(|rj| (rk / rj.max(1e-300)).ln()).sum();
            if s > 0.0 { (k - 1) as f64 / s } else { 0.0 }
        })
        .collect();
    dims.sort_by(|a, b| a.total_cmp(b));
    Some(dims[dims.len() / 2])
}

/// Largest median local dimension still classified as a curve.
pub const CURVE_DIMENSION: f64 = 1.4;

/// Curve if the median local dimension is at most [`CURVE_DIMENSION`].
pub fn classify_seed(points: &[[f64; 2]]) -> Option<SeedClass> {
    local_dimension(points).map(|d| if d <= CURVE_DIMENSION { SeedClass::Curve } else { SeedClass::Scatter })
}

/// Project crossings onto the two in-plane coordinates.
pub fn in_plane(points: &[Vec<f64>], plane: &Plane) -> Vec<[f64; 2]> {
    let keep: Vec<usize> = (0..points.first().map(|p| p.len()).unwrap_or(0)).filter(|&i| i != plane.coord).collect();
    points.iter().map(|p| [p[keep[0]], p[keep[1]]]).collect()
}

/// Categorical palette for per-seed colouring.
const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

/// Scatter plot of the in-plane crossing coordinates, one colour per seed,
/// on a fixed 1000×1000 view box.
pub fn section_svg(section: &SectionCrossings) -> String {
    let pts: Vec<Vec<[f64; 2]>> = section.seeds.iter().map(|s| in_plane(&s.points, &section.plane)).collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let margin = 20.0;
    let scale = (1000.0 - 2.0 * margin) / span;
    let mut out = String::new();
    out.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 1000\" width=\"1000\" height=\"1000\">\n");
    out.push_str("<rect width=\"1000\" height=\"1000\" fill=\"white\"/>\n");
    for (i, seed_pts) in pts.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, "<g fill=\"{colour}\">");
        for p in seed_pts {
            let cx = margin + (p[0] - x0) * scale;
            let cy = 1000.0 - margin - (p[1] - y0) * scale;
            let _ = writeln!(out, "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"1.2\"/>");
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

// ---------------------------------------------------------------------------
// Paired trajectories

#[derive(Clone, Debug)]
pub struct PairedTrajectory {
    pub times: Vec<f64>,
    pub deterministic: Vec<Vec<f64>>,
    pub stochastic: Vec<Vec<f64>>,
    /// First sampled time with Euclidean separation above 1.
    pub divergence_time: Option<f64>,
    pub deterministic_escaped: bool,
    pub stochastic_escaped: bool,
}

impl PairedTrajectory {
    /// Columns `t, det_x1.., sto_x1..`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.deterministic.first().map(|p| p.len()).unwrap_or(0);
        let det: Vec<String> = (1..=d).map(|i| format!("det_x{i}")).collect();
        let sto: Vec<String> = (1..=d).map(|i| format!("sto_x{i}")).collect();
        writeln!(w, "t,{},{}", det.join(","), sto.join(","))?;
        for ((t, a), b) in self.times.iter().zip(&self.deterministic).zip(&self.stochastic) {
            let row: Vec<String> = a.iter().chain(b).map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{t:.16e},{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn max_separation(&self) -> f64 {
        self.deterministic
            .iter()
            .zip(&self.stochastic)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// RK4 trajectory of `ẋ = −V(x)` and one Euler–Maruyama path of
/// `dx = −V dt + √(2ε) dB` from the same point, sampled every `stride`
/// steps. Both use the drift sign of the Langevin equation so that ε = 0
/// differs only by the integrator.
pub fn stochastic_vs_deterministic(
    field: &FlowField,
    epsilon: f64,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    stride: usize,
    seed: u64,
) -> Result<PairedTrajectory> {
    if !(dt > 0.0 && t_end > 0.0) || stride == 0 {
        return Err(Error::arg("need dt > 0, T > 0 and a nonzero stride"));
    }
    if x0.len() != field.dimension() {
        return Err(Error::arg("initial point has the wrong dimension"));
    }
    let steps = (t_end / dt).round() as usize;
    let torus = field.is_torus();
    let mut x = x0.to_vec();
    let mut det = vec![x.clone()];
    let mut det_escaped = false;
    for s in 1..=steps {
        x = rk4_step(field, &x, dt, -1.0);
        if torus {
            for v in x.iter_mut() {
                *v = crate::models::wrap_angle(*v);
            }
        } else if x.iter().map(|v| v * v).sum::<f64>().sqrt() > DEFAULT_BOUND || x.iter().any(|v| !v.is_finite()) {
            det_escaped = true;
            break;
        }
        if s % stride == 0 {
            det.push(x.clone());
        }
    }
    let sto = langevin_trajectory(field, epsilon, x0, dt, steps, stride, seed)?;
    let full = steps / stride + 1;
    let n = det.len().min(sto.len());
    let times: Vec<f64> = (0..n).map(|i| (i * stride) as f64 * dt).collect();
    det.truncate(n);
    let mut sto = sto;
    let sto_escaped = sto.len() < full;
    sto.truncate(n);
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(p, q)| {
                let mut d = (p - q).abs();
                if torus {
                    d = d.min(TWO_PI - d);
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let divergence_time = (0..n).find(|&i| dist(&det[i], &sto[i]) > 1.0).map(|i| times[i]);
    Ok(PairedTrajectory {
        times,
        deterministic: det,
        stochastic: sto,
        divergence_time,
        deterministic_escaped: det_escaped,
        stochastic_escaped: sto_escaped,
    })
}
