//! Run configuration: one TOML file per run, validated before any
//! computation. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use ruelle::continuation::{default_schedule, geometric_schedule};
use ruelle::dynamics::CrossingDirection;
use ruelle::models::TrigTerm;
use ruelle::{C64, FlowField, FourierTruncation, KPolicy, MapSystem, Observable, SpectralSystem, TrigPoly, Window};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemSpec>,
    pub epsilon: Option<f64>,
    pub schedule: Option<ScheduleSpec>,
    pub truncation: Option<TruncationSpec>,
    pub window: Option<WindowSpec>,
    pub solver: Option<SolverSpec>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub gap: Option<GapSpec>,
    pub projector: Option<ProjectorSpec>,
    pub correlate: Option<CorrelateSpec>,
    pub langevin: Option<LangevinSpec>,
    pub diagnose: Option<DiagnoseSpec>,
    pub nosehoover: Option<NoseHooverSpec>,
}

/// One real term `cos·cos(k·x) + sin·sin(k·x)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

impl From<&TermSpec> for TrigTerm {
    fn from(t: &TermSpec) -> Self {
        TrigTerm::new(t.k.clone(), t.cos, t.sin)
    }
}

/// A built-in system by name (with optional parameters), or an inline
/// torus field (`components`) or torus map (`matrix`, `perturbation`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: Option<String>,
    #[serde(default)]
    pub params: Vec<f64>,
    pub dimension: Option<usize>,
    pub components: Option<Vec<Vec<TermSpec>>>,
    pub matrix: Option<[[i64; 2]; 2]>,
    pub perturbation: Option<[Vec<TermSpec>; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    List(Vec<f64>),
    Geometric(GeometricSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricSpec {
    pub start: f64,
    pub ratio: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    /// Fixed cutoff; omit for the adaptive policy.
    pub k: Option<usize>,
    pub min_k: Option<usize>,
    pub dense_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub re: [f64; 2],
    pub im: [f64; 2],
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    #[default]
    Dense,
    Arnoldi,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub method: SolverMethod,
    pub shift: Option<[f64; 2]>,
    pub count: Option<usize>,
    pub tol: Option<f64>,
    pub krylov_dim: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    pub gamma0: f64,
    pub delta: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub nodes: Option<usize>,
    #[serde(default)]
    pub eigenfunctions: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TimesSpec {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl TimesSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TimesSpec::List(v) => v.clone(),
            TimesSpec::Range(r) => (0..r.count).map(|i| r.start + r.step * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    #[serde(default = "default_observable_name")]
    pub name: String,
    pub terms: Vec<TermSpec>,
}

fn default_observable_name() -> String {
    "observable".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateSpec {
    pub f: ObservableSpec,
    pub g: Option<ObservableSpec>,
    /// Flow generators only.
    pub times: Option<TimesSpec>,
    /// Noisy Koopman operators only.
    pub steps: Option<usize>,
    #[serde(default)]
    pub mean_subtract: bool,
    /// Depth `A` of the resonance expansion; omitted means no expansion.
    pub expansion_depth: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSpec {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub paths: usize,
    pub times: TimesSpec,
    pub observable: ObservableSpec,
    /// Compare against the operator evolution (needs `truncation`).
    #[serde(default)]
    pub compare: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSpec {
    /// Explicit initial points; otherwise `seeds` random points on the torus.
    pub points: Option<Vec<Vec<f64>>>,
    pub seeds: Option<usize>,
    pub steps: usize,
    #[serde(default = "one")]
    pub renorm_every: usize,
    #[serde(default = "default_transient")]
    pub transient: usize,
    #[serde(default = "default_lyapunov_dt")]
    pub dt: f64,
    /// For maps with `epsilon` set: truncations at which the noisy Koopman
    /// spectrum is counted outside the disc of radius `e^{−γ̂₀/2}`.
    #[serde(default)]
    pub compare_k: Vec<usize>,
}

fn one() -> usize {
    1
}
fn default_transient() -> usize {
    200
}
fn default_lyapunov_dt() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoseHooverSpec {
    #[serde(default = "default_nh_seeds")]
    pub seeds: usize,
    #[serde(default = "default_nh_pmin")]
    pub p_min: f64,
    #[serde(default = "default_nh_pmax")]
    pub p_max: f64,
    #[serde(default = "default_nh_crossings")]
    pub crossings: usize,
    #[serde(default = "default_nh_direction")]
    pub direction: CrossingDirection,
    #[serde(default = "default_nh_dt")]
    pub dt: f64,
    #[serde(default = "default_nh_max_time")]
    pub max_time: f64,
    #[serde(default = "default_nh_eps")]
    pub epsilon: f64,
    #[serde(default = "default_nh_x0")]
    pub x0: Vec<f64>,
    #[serde(default = "default_nh_tend")]
    pub t_end: f64,
    #[serde(default = "default_nh_stride")]
    pub stride: usize,
    #[serde(default = "default_true")]
    pub svg: bool,
}

fn default_nh_seeds() -> usize {
    20
}
fn default_nh_pmin() -> f64 {
    0.25
}
fn default_nh_pmax() -> f64 {
    5.0
}
fn default_nh_crossings() -> usize {
    2000
}
fn default_nh_direction() -> CrossingDirection {
    CrossingDirection::Both
}
fn default_nh_dt() -> f64 {
    1e-3
}
fn default_nh_max_time() -> f64 {
    1e5
}
fn default_nh_eps() -> f64 {
    0.01
}
fn default_nh_x0() -> Vec<f64> {
    vec![0.0, 5.0, 0.0]
}
fn default_nh_tend() -> f64 {
    50.0
}
fn default_nh_stride() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl Default for NoseHooverSpec {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
    Ok((cfg, bytes))
}

fn terms(v: &[TermSpec]) -> Vec<TrigTerm> {
    v.iter().map(TrigTerm::from).collect()
}

fn param(spec: &SystemSpec, i: usize, default: f64) -> f64 {
    spec.params.get(i).copied().unwrap_or(default)
}

impl SystemSpec {
    pub fn build(&self) -> Result<SpectralSystem, CliError> {
        if let Some(c) = &self.components {
            let d = self.dimension.unwrap_or(c.len());
            let comps: Vec<Vec<TrigTerm>> = c.iter().map(|t| terms(t)).collect();
            let name = self.name.clone().unwrap_or_else(|| "inline_field".into());
            return Ok(SpectralSystem::Flow(FlowField::torus(name, d, &comps).map_err(config_err("system.components"))?));
        }
        if let Some(m) = self.matrix {
            let p = match &self.perturbation {
                Some([a, b]) => Some([
                    TrigPoly::from_terms(2, &terms(a)).map_err(config_err("system.perturbation"))?,
                    TrigPoly::from_terms(2, &terms(b)).map_err(config_err("system.perturbation"))?,
                ]),
                None => None,
            };
            let name = self.name.clone().unwrap_or_else(|| "inline_map".into());
            return Ok(SpectralSystem::Map(MapSystem::new(name, m, p).map_err(config_err("system.matrix"))?));
        }
        let name = self.name.as_deref().ok_or_else(|| {
            CliError::Config("system: give `name` for a built-in system, or `components` / `matrix` inline".into())
        })?;
        let sys = match name {
            "rotation" => SpectralSystem::Flow(FlowField::rotation()),
            "translation" => SpectralSystem::Flow(FlowField::translation(param(self, 0, 1.0), param(self, 1, 2f64.sqrt()))),
            "sin_shear" => SpectralSystem::Flow(FlowField::sin_shear()),
            "shear_translation" => {
                SpectralSystem::Flow(FlowField::shear_translation(param(self, 0, 1.0), param(self, 1, 2f64.sqrt())))
            }
            "t2_benchmark" => SpectralSystem::Flow(FlowField::t2_benchmark()),
            "variable_circle" => SpectralSystem::Flow(FlowField::variable_circle(param(self, 0, 0.5))),
            "vertical_t3" => SpectralSystem::Flow(FlowField::vertical_t3()),
            "nose_hoover_w" => SpectralSystem::Flow(FlowField::nose_hoover_w()),
            "nose_hoover_v" => SpectralSystem::Flow(FlowField::nose_hoover_v()),
            "cat_map" => SpectralSystem::Map(MapSystem::cat_map()),
            "perturbed_cat_map" => {
                SpectralSystem::Map(MapSystem::perturbed_cat_map(param(self, 0, 0.05)).map_err(config_err("system.params"))?)
            }
            other => return Err(CliError::Config(format!("system.name: unknown built-in system `{other}`"))),
        };
        Ok(sys)
    }
}

fn config_err(key: &'static str) -> impl Fn(ruelle::Error) -> CliError {
    move |e| CliError::Config(format!("{key}: {e}"))
}

impl RunConfig {
    pub fn system(&self) -> Result<SpectralSystem, CliError> {
        self.system.as_ref().ok_or_else(|| missing("system"))?.build()
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        let e = self.epsilon.ok_or_else(|| missing("epsilon"))?;
        if !(e >= 0.0 && e.is_finite()) {
            return Err(CliError::Config(format!("epsilon: must be a nonnegative number, got {e}")));
        }
        Ok(e)
    }

    pub fn k_policy(&self) -> Result<KPolicy, CliError> {
        let t = self.truncation.as_ref().ok_or_else(|| missing("truncation"))?;
        Ok(match t.k {
            Some(k) => KPolicy::Fixed(k),
            None => KPolicy::Adaptive { min_k: t.min_k.unwrap_or(8), dense_limit: t.dense_limit.unwrap_or(4096) },
        })
    }

    pub fn truncation_for(&self, system: &SpectralSystem, epsilon: f64) -> Result<FourierTruncation, CliError> {
        let k = self.k_policy()?.k_for(epsilon, system.dimension());
        FourierTruncation::new(system.dimension(), k).map_err(config_err("truncation"))
    }

    pub fn window(&self) -> Result<Window, CliError> {
        let w = self.window.ok_or_else(|| missing("window"))?;
        Window::new(w.re[0], w.re[1], w.im[0], w.im[1]).map_err(config_err("window"))
    }

    pub fn schedule(&self) -> Result<Vec<f64>, CliError> {
        let s = match &self.schedule {
            None => default_schedule(),
            Some(ScheduleSpec::List(v)) => v.clone(),
            Some(ScheduleSpec::Geometric(g)) => geometric_schedule(g.start, g.ratio, g.points),
        };
        if s.is_empty() || s.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(CliError::Config("schedule: needs positive finite viscosities".into()));
        }
        Ok(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

pub fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing required key `{key}` for this command"))
}

pub fn observable(spec: &ObservableSpec, trunc: FourierTruncation) -> Result<Observable, CliError> {
    let p = TrigPoly::from_terms(trunc.dim, &terms(&spec.terms)).map_err(config_err("observable.terms"))?;
    Observable::from_poly(spec.name.clone(), trunc, &p).map_err(config_err("observable.terms"))
}

/// Pointwise observable for Monte-Carlo (no truncation needed).
pub fn pointwise_observable(spec: &ObservableSpec, dim: usize) -> Result<Observable, CliError> {
    let p = TrigPoly::from_terms(dim, &terms(&spec.terms)).map_err(config_err("observable.terms"))?;
    Ok(Observable::closed_form(spec.name.clone(), move |x: &[f64]| C64::new(p.eval(x), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse_and_build() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let (cfg, _) = load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            if cfg.system.is_some() {
                cfg.system().unwrap();
            }
            n += 1;
        }
        assert!(n >= 8);
    }

    #[test]
    fn schedules_and_times_expand() {
        let cfg: RunConfig = toml::from_str("schedule = { start = 0.4, ratio = 0.5, points = 3 }").unwrap();
        assert_eq!(cfg.schedule().unwrap(), vec![0.4, 0.2, 0.1]);
        let t = TimesSpec::Range(RangeSpec { start: 1.0, step: 0.5, count: 3 });
        assert_eq!(t.values(), vec![1.0, 1.5, 2.0]);
        let bad: RunConfig = toml::from_str("schedule = [0.1, -0.2]").unwrap();
        assert!(matches!(bad.schedule(), Err(CliError::Config(_))));
    }

    #[test]
    fn adaptive_truncation_is_the_default_policy() {
        let cfg: RunConfig = toml::from_str("[truncation]\nmin_k = 6").unwrap();
        assert_eq!(cfg.k_policy().unwrap(), KPolicy::Adaptive { min_k: 6, dense_limit: 4096 });
    }

    #[test]
    fn inline_map_builds() {
        let cfg: RunConfig = toml::from_str(
            "[system]\nmatrix = [[2, 1], [1, 1]]\nperturbation = [[], [{ k = [1, 0], sin = 0.05 }]]",
        )
        .unwrap();
        assert!(matches!(cfg.system().unwrap(), SpectralSystem::Map(_)));
    }
}
