//! Command-line orchestration for the `ruelle` toolkit: config parsing,
//! subcommands and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use error::CliError;
pub use manifest::RunManifest;

/// Environment variable that overrides the config's `output_dir`.
pub const OUT_DIR_ENV: &str = "RUELLE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ruelle", version, about = "Viscous resonance spectra, correlations and dynamics diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectrum of the truncated operator at one ε.
    Spectrum(CommonArgs),
    /// Viscosity sweep with branch tracking and ε → 0 extrapolation.
    Sweep(CommonArgs),
    /// Contour-integral spectral projector.
    Project(CommonArgs),
    /// Semigroup correlations and the resonance expansion.
    Correlate(CommonArgs),
    /// Langevin Monte-Carlo, optionally against the operator evolution.
    Langevin(CommonArgs),
    /// Lyapunov spectra and the growth-rate estimate.
    Diagnose(CommonArgs),
    /// Poincaré section and paired trajectories of a 3D flow.
    Nosehoover(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the environment and the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Sweep(_) => "sweep",
            Command::Project(_) => "project",
            Command::Correlate(_) => "correlate",
            Command::Langevin(_) => "langevin",
            Command::Diagnose(_) => "diagnose",
            Command::Nosehoover(_) => "nosehoover",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a)
            | Command::Sweep(a)
            | Command::Project(a)
            | Command::Correlate(a)
            | Command::Langevin(a)
            | Command::Diagnose(a)
            | Command::Nosehoover(a) => a,
        }
    }
}

fn output_dir(args: &CommonArgs, cfg: &config::RunConfig, config_path: &Path) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Some(o) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(o);
    }
    match &cfg.output_dir {
        // relative to the config file
        Some(d) if d.is_relative() => config_path.parent().unwrap_or(Path::new(".")).join(d),
        Some(d) => d.clone(),
        None => PathBuf::from("out"),
    }
}

/// Validate the config, run the command in a pool of the requested size and
/// write its files plus `manifest.json`.
pub fn run(command: &Command) -> Result<RunManifest, CliError> {
    let args = command.args();
    let (cfg, raw) = config::load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed());
    let threads = args.threads.or(cfg.threads).unwrap_or(0);
    let dir = output_dir(args, &cfg, &args.config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    let used_threads = pool.current_num_threads();
    let run = commands::Run { cfg: &cfg, seed };
    let mut out = manifest::Outputs::default();
    pool.install(|| match command {
        Command::Spectrum(_) => commands::spectrum(&run, &mut out),
        Command::Sweep(_) => commands::sweep_cmd(&run, &mut out),
        Command::Project(_) => commands::project(&run, &mut out),
        Command::Correlate(_) => commands::correlate(&run, &mut out),
        Command::Langevin(_) => commands::langevin(&run, &mut out),
        Command::Diagnose(_) => commands::diagnose(&run, &mut out),
        Command::Nosehoover(_) => commands::nosehoover(&run, &mut out),
    })?;
    out.write(&dir, command.name(), &raw, seed, used_threads)
}
