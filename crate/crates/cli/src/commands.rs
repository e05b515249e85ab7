//! One function per subcommand. Each returns the files it produced; the
//! caller writes them and the manifest.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use ruelle::continuation::{gap_diagnostic, modulus_gap_count, sweep, SweepOptions};
use ruelle::correlation::{
    correlation, expansion_reconstruct, koopman_correlation, langevin_sample, mc_vs_operator, path_rng,
};
use ruelle::dynamics::{
    gamma0_from_reports, in_plane, local_dimension, lyapunov_spectrum, poincare_section, section_svg,
    stochastic_vs_deterministic, LyapunovOptions, LyapunovReport, Plane, SectionOptions,
    CURVE_DIMENSION,
};
use ruelle::eigen::{dense_spectrum_with, shift_invert_arnoldi_with, ArnoldiOptions, DenseOptions};
use ruelle::projector::{check_annulus, contour_projector, eigenfunctions, DEFAULT_NODES};
use ruelle::{AssemblyOptions, FlowField, FourierTruncation, McConfig, OperatorMatrix, SeedClass, SpectralSystem, C64};
use serde::Serialize;

use crate::config::{self, missing, NoseHooverSpec, RunConfig, SolverMethod};
use crate::error::{CliError, StageExt};
use crate::manifest::Outputs;

/// Resolved run parameters shared by every command.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub seed: u64,
}

fn csv<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn assemble(system: &SpectralSystem, eps: f64, trunc: FourierTruncation) -> Result<OperatorMatrix, CliError> {
    system.assemble(eps, trunc, &AssemblyOptions::default()).stage("assemble")
}

fn flow(system: &SpectralSystem, what: &str) -> Result<FlowField, CliError> {
    match system {
        SpectralSystem::Flow(f) => Ok(f.clone()),
        SpectralSystem::Map(_) => Err(CliError::Config(format!("{what} needs a flow, not a map"))),
    }
}

pub fn spectrum(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let system = cfg.system()?;
    let eps = cfg.epsilon()?;
    let trunc = cfg.truncation_for(&system, eps)?;
    let op = out.timed("assemble", || assemble(&system, eps, trunc))?;
    let solver = cfg.solver.clone().unwrap_or(config::SolverSpec {
        method: SolverMethod::Dense,
        shift: None,
        count: None,
        tol: None,
        krylov_dim: None,
    });
    let rs = out.timed("solve", || match solver.method {
        SolverMethod::Dense => {
            let opts = DenseOptions { tolerance: solver.tol.unwrap_or(1e-10), ..Default::default() };
            dense_spectrum_with(&op, &opts).stage("solve")
        }
        SolverMethod::Arnoldi => {
            let shift = solver.shift.ok_or_else(|| missing("solver.shift"))?;
            let count = solver.count.ok_or_else(|| missing("solver.count"))?;
            let opts = ArnoldiOptions { krylov_dim: solver.krylov_dim, seed: run.seed, ..Default::default() };
            shift_invert_arnoldi_with(&op, C64::new(shift[0], shift[1]), count, solver.tol.unwrap_or(1e-10), &opts)
                .stage("solve")
        }
    })?;
    let rs = match cfg.window {
        Some(_) => rs.restrict(cfg.window()?),
        None => rs,
    };
    out.add("spectrum.csv", csv(|w| rs.write_csv(w)));
    Ok(())
}

#[derive(Serialize)]
struct LimitsFile {
    system: String,
    window: ruelle::Window,
    schedule: Vec<f64>,
    k_per_level: Vec<usize>,
    window_counts: Vec<(f64, usize)>,
    branches: Vec<ruelle::continuation::BranchSummary>,
    gap: Option<ruelle::continuation::GapReport>,
}

pub fn sweep_cmd(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let system = cfg.system()?;
    let schedule = cfg.schedule()?;
    let window = cfg.window()?;
    let k_policy = match cfg.truncation {
        Some(_) => cfg.k_policy()?,
        None => Default::default(),
    };
    let opts = SweepOptions { k_policy, ..Default::default() };
    let res = out.timed("sweep", || sweep(&system, &schedule, window, &opts).stage("sweep"))?;
    out.add("branches.csv", csv(|w| res.write_branches_csv(w)));
    let gap = cfg.gap.as_ref().map(|g| gap_diagnostic(&res, g.gamma0, g.delta, g.radius));
    out.add_json(
        "limits.json",
        &LimitsFile {
            system: res.system.clone(),
            window,
            k_per_level: res.levels.iter().map(|l| l.truncation.k_max).collect(),
            schedule,
            window_counts: res.window_counts(),
            branches: res.summaries(),
            gap,
        },
    );
    Ok(())
}

#[derive(Serialize)]
struct EigenPairSummary {
    values: Vec<[f64; 2]>,
    defective: bool,
    chain_length: usize,
    biorthogonality_defect: f64,
    /// `max_j ‖(M − λ_j)u_j‖ / ‖u_j‖`.
    max_right_residual: f64,
}

#[derive(Serialize)]
struct ProjectorFile {
    system: String,
    epsilon: f64,
    k_max: usize,
    projector: ruelle::projector::ProjectorSummary,
    /// Eigenvalues of the truncated operator inside the contour.
    enclosed: Vec<[f64; 2]>,
    eigenpairs: Option<EigenPairSummary>,
}

pub fn project(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let system = cfg.system()?;
    let eps = cfg.epsilon()?;
    let trunc = cfg.truncation_for(&system, eps)?;
    let spec = cfg.projector.as_ref().ok_or_else(|| missing("projector"))?;
    let center = C64::new(spec.center[0], spec.center[1]);
    let op = out.timed("assemble", || assemble(&system, eps, trunc))?;
    let prior = out.timed("solve", || dense_spectrum_with(&op, &DenseOptions::default()).stage("solve"))?;
    check_annulus(&prior, center, spec.radius).stage("project")?;
    let p = out.timed("project", || {
        contour_projector(&op, center, spec.radius, spec.nodes.unwrap_or(DEFAULT_NODES)).stage("project")
    })?;
    let enclosed =
        prior.eigenvalues.iter().filter(|l| (*l - center).norm() < spec.radius).map(|l| [l.re, l.im]).collect();
    let eigenpairs = if spec.eigenfunctions {
        let pairs = out.timed("eigenfunctions", || eigenfunctions(&op, &p).stage("eigenfunctions"))?;
        let max_right_residual = pairs
            .values
            .iter()
            .zip(&pairs.right)
            .map(|(l, u)| {
                let mu = op.apply(u).expect("vector has the operator size");
                let r: f64 = mu.iter().zip(u).map(|(a, b)| (a - l * b).norm_sqr()).sum::<f64>().sqrt();
                r / u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        Some(EigenPairSummary {
            values: pairs.values.iter().map(|z| [z.re, z.im]).collect(),
            defective: pairs.defective,
            chain_length: pairs.chain_length,
            biorthogonality_defect: pairs.biorthogonality_defect,
            max_right_residual,
        })
    } else {
        None
    };
    out.add_json(
        "projector.json",
        &ProjectorFile {
            system: system.name().to_string(),
            epsilon: eps,
            k_max: trunc.k_max,
            projector: p.summary(),
            enclosed,
            eigenpairs,
        },
    );
    Ok(())
}

#[derive(Serialize)]
struct ExpansionFile {
    depth: f64,
    included: Vec<[f64; 2]>,
    excluded_defective: usize,
    max_abs_error: f64,
    fitted_prefactor: f64,
    /// `null` when the residual is at round-off level throughout the tail.
    decay_rate: Option<f64>,
}

pub fn correlate(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let system = cfg.system()?;
    let eps = cfg.epsilon()?;
    let trunc = cfg.truncation_for(&system, eps)?;
    let spec = cfg.correlate.as_ref().ok_or_else(|| missing("correlate"))?;
    let f = config::observable(&spec.f, trunc)?;
    let g = match &spec.g {
        Some(g) => config::observable(g, trunc)?,
        None => f.clone(),
    };
    let op = out.timed("assemble", || assemble(&system, eps, trunc))?;
    match &system {
        SpectralSystem::Map(_) => {
            let steps = spec.steps.ok_or_else(|| missing("correlate.steps"))?;
            if spec.expansion_depth.is_some() {
                return Err(CliError::Config("correlate.expansion_depth applies to flows only".into()));
            }
            let tr = out.timed("evolve", || koopman_correlation(&op, &f, &g, steps, spec.mean_subtract).stage("evolve"))?;
            out.add("correlation.csv", csv(|w| tr.write_csv(w)));
        }
        SpectralSystem::Flow(_) => {
            let times = spec.times.as_ref().ok_or_else(|| missing("correlate.times"))?.values();
            let tr = out.timed("evolve", || correlation(&op, &f, &g, &times, spec.mean_subtract).stage("evolve"))?;
            out.add("correlation.csv", csv(|w| tr.write_csv(w)));
            if let Some(depth) = spec.expansion_depth {
                if spec.mean_subtract {
                    return Err(CliError::Config(
                        "correlate.expansion_depth compares raw correlations; unset mean_subtract".into(),
                    ));
                }
                let rep = out.timed("expansion", || {
                    let rs = dense_spectrum_with(&op, &DenseOptions { left_vectors: true, ..Default::default() })
                        .stage("solve")?;
                    expansion_reconstruct(&op, &rs, &f, &g, &times, depth).stage("expansion")
                })?;
                out.add("expansion.csv", csv(|w| rep.expansion.write_csv(w)));
                out.add_json(
                    "expansion.json",
                    &ExpansionFile {
                        depth,
                        included: rep.included.iter().map(|z| [z.re, z.im]).collect(),
                        excluded_defective: rep.excluded_defective,
                        max_abs_error: rep.max_abs_error,
                        fitted_prefactor: rep.fitted_prefactor,
                        decay_rate: rep.decay_rate.is_finite().then_some(rep.decay_rate),
                    },
                );
            }
        }
    }
    Ok(())
}

pub fn langevin(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let system = cfg.system()?;
    let field = flow(&system, "langevin")?;
    let eps = cfg.epsilon()?;
    let spec = cfg.langevin.as_ref().ok_or_else(|| missing("langevin"))?;
    let times = spec.times.values();
    let mc = McConfig { dt: spec.dt, paths: spec.paths, seed: run.seed };
    if spec.compare {
        let trunc = cfg.truncation_for(&system, eps)?;
        let f = config::observable(&spec.observable, trunc)?;
        let cmp = out.timed("monte_carlo", || mc_vs_operator(&field, &f, eps, &spec.x0, &times, &mc).stage("monte_carlo"))?;
        out.add("mc.csv", csv(|w| cmp.monte_carlo.to_trace(eps, &mc).write_csv(w)));
        out.add(
            "comparison.csv",
            csv(|w| {
                use std::io::Write;
                writeln!(w, "t,operator_re,operator_im,mc_re,mc_im,stderr_re,stderr_im,z")?;
                for i in 0..cmp.times.len() {
                    let (o, m, s) = (cmp.operator[i], cmp.monte_carlo.mean[i], cmp.monte_carlo.stderr[i]);
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        cmp.times[i], o.re, o.im, m.re, m.im, s.re, s.im, cmp.z_scores[i]
                    )?;
                }
                Ok(())
            }),
        );
    } else {
        let f = config::pointwise_observable(&spec.observable, field.dimension())?;
        let est = out.timed("monte_carlo", || langevin_sample(&field, eps, &spec.x0, &f, &times, &mc).stage("monte_carlo"))?;
        out.add("mc.csv", csv(|w| est.to_trace(eps, &mc).write_csv(w)));
    }
    Ok(())
}

#[derive(Serialize)]
struct KoopmanCheck {
    k_max: usize,
    leading_re: f64,
    leading_im: f64,
    /// `|λ₀ − 1|` for the eigenvalue of largest modulus.
    leading_defect: f64,
    /// Eigenvalues with modulus in `(e^{−γ̂₀/2}, 1]` other than 1.
    count_above: usize,
}

#[derive(Serialize)]
struct LyapunovFile {
    system: String,
    seeds: Vec<Vec<f64>>,
    steps: usize,
    spectra: Vec<LyapunovReport>,
    gamma0: ruelle::dynamics::Gamma0Report,
    koopman: Vec<KoopmanCheck>,
}

/// Uniform points on the torus from per-seed ChaCha streams.
fn torus_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            (0..dim).map(|_| rng.random::<f64>() * TAU).collect()
        })
        .collect()
}

pub fn diagnose(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let system = cfg.system()?;
    let spec = cfg.diagnose.as_ref().ok_or_else(|| missing("diagnose"))?;
    let seeds = match (&spec.points, spec.seeds) {
        (Some(p), _) => p.clone(),
        (None, Some(n)) => torus_points(run.seed, n, system.dimension()),
        (None, None) => return Err(missing("diagnose.points or diagnose.seeds")),
    };
    let opts = LyapunovOptions {
        steps: spec.steps,
        renorm_every: spec.renorm_every,
        transient: spec.transient,
        dt: spec.dt,
        ..Default::default()
    };
    let spectra: Vec<LyapunovReport> = out.timed("lyapunov", || {
        seeds.par_iter().map(|s| lyapunov_spectrum(&system, s, &opts)).collect::<ruelle::Result<Vec<_>>>().stage("lyapunov")
    })?;
    let gamma0 = gamma0_from_reports(&spectra).stage("gamma0")?;
    let mut koopman = Vec::new();
    if !spec.compare_k.is_empty() {
        if !matches!(system, SpectralSystem::Map(_)) {
            return Err(CliError::Config("diagnose.compare_k applies to maps only".into()));
        }
        let eps = cfg.epsilon()?;
        for &k in &spec.compare_k {
            let trunc = FourierTruncation::new(2, k).stage("assemble")?;
            let rs = out.timed(&format!("koopman_k{k}"), || {
                let op = assemble(&system, eps, trunc)?;
                dense_spectrum_with(&op, &DenseOptions::default()).stage("solve")
            })?;
            let lead = rs.eigenvalues.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
            koopman.push(KoopmanCheck {
                k_max: k,
                leading_re: lead.re,
                leading_im: lead.im,
                leading_defect: (lead - C64::new(1.0, 0.0)).norm(),
                count_above: modulus_gap_count(&rs, gamma0.gamma0),
            });
        }
    }
    out.add_json(
        "lyapunov.json",
        &LyapunovFile { system: system.name().to_string(), seeds, steps: spec.steps, spectra, gamma0, koopman },
    );
    Ok(())
}

#[derive(Serialize)]
struct SeedSummary {
    seed: Vec<f64>,
    crossings: usize,
    class: Option<SeedClass>,
    local_dimension: Option<f64>,
    escaped: bool,
    out_of_time: bool,
}

#[derive(Serialize)]
struct SectionFile {
    system: String,
    plane: Plane,
    total_crossings: usize,
    curve_threshold: f64,
    scatter_seeds: usize,
    curve_seeds: usize,
    seeds: Vec<SeedSummary>,
    trajectory_epsilon: f64,
    trajectory_x0: Vec<f64>,
    divergence_time: Option<f64>,
}

pub fn nosehoover(run: &Run, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = run.cfg;
    let field = match &cfg.system {
        Some(_) => flow(&cfg.system()?, "nosehoover")?,
        None => FlowField::nose_hoover_w(),
    };
    if field.dimension() != 3 {
        return Err(CliError::Config("nosehoover needs a three-dimensional flow".into()));
    }
    let spec = cfg.nosehoover.clone().unwrap_or_default();
    if spec.seeds == 0 || spec.crossings == 0 {
        return Err(CliError::Config("nosehoover.seeds and nosehoover.crossings must be positive".into()));
    }
    let seeds = nh_seeds(&spec);
    let plane = Plane { coord: 2, level: 0.0, direction: spec.direction };
    let opts = SectionOptions { dt: spec.dt, max_time: spec.max_time, ..Default::default() };
    let section =
        out.timed("section", || poincare_section(&field, plane, &seeds, spec.crossings, &opts).stage("section"))?;
    let dims: Vec<Option<f64>> =
        out.timed("classify", || section.seeds.par_iter().map(|s| local_dimension(&in_plane(&s.points, &plane))).collect());
    let classes: Vec<Option<SeedClass>> = dims
        .iter()
        .map(|d| d.map(|d| if d <= CURVE_DIMENSION { SeedClass::Curve } else { SeedClass::Scatter }))
        .collect();
    let paired = out.timed("trajectories", || {
        stochastic_vs_deterministic(&field, spec.epsilon, &spec.x0, spec.t_end, spec.dt, spec.stride, run.seed)
            .stage("trajectories")
    })?;
    out.add("section.csv", csv(|w| section.write_csv(w, &classes)));
    out.add("trajectories.csv", csv(|w| paired.write_csv(w)));
    if spec.svg {
        out.add("section.svg", section_svg(&section).into_bytes());
    }
    let count = |c: SeedClass| classes.iter().filter(|x| **x == Some(c)).count();
    out.add_json(
        "section.json",
        &SectionFile {
            system: field.name().to_string(),
            plane,
            total_crossings: section.total(),
            curve_threshold: CURVE_DIMENSION,
            scatter_seeds: count(SeedClass::Scatter),
            curve_seeds: count(SeedClass::Curve),
            seeds: section
                .seeds
                .iter()
                .zip(dims.iter().zip(&classes))
                .map(|(s, (d, c))| SeedSummary {
                    seed: s.seed.clone(),
                    crossings: s.points.len(),
                    class: *c,
                    local_dimension: *d,
                    escaped: s.escaped,
                    out_of_time: s.out_of_time,
                })
                .collect(),
            trajectory_epsilon: spec.epsilon,
            trajectory_x0: spec.x0.clone(),
            divergence_time: paired.divergence_time,
        },
    );
    Ok(())
}

/// Seeds `(0, p, 0)` with `p` evenly spaced over `[p_min, p_max]`.
fn nh_seeds(spec: &NoseHooverSpec) -> Vec<Vec<f64>> {
    let n = spec.seeds;
    (0..n)
        .map(|i| {
            let p = if n == 1 { spec.p_min } else { spec.p_min + (spec.p_max - spec.p_min) * i as f64 / (n - 1) as f64 };
            vec![0.0, p, 0.0]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ruelle::dynamics::CrossingDirection;

    #[test]
    fn default_seeds_are_quarter_spaced() {
        let s = nh_seeds(&NoseHooverSpec::default());
        assert_eq!(s.len(), 20);
        for (i, x) in s.iter().enumerate() {
            assert!((x[1] - 0.25 * (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_points_are_reproducible_and_in_range() {
        let a = torus_points(7, 5, 2);
        assert_eq!(a, torus_points(7, 5, 2));
        assert!(a.iter().flatten().all(|v| (0.0..TAU).contains(v)));
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn default_direction_is_both() {
        assert_eq!(NoseHooverSpec::default().direction, CrossingDirection::Both);
    }
}
