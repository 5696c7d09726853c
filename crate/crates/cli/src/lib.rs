//! Command-line experiment runner.

pub mod config;
pub mod experiments;
pub mod scale;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, Kind};
use serde_json::Value;
use std::path::PathBuf;
use thiserror::Error;
use traplab::TrapError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] TrapError),
    #[error("cannot read config {path}: {reason}")]
    ConfigFile { path: PathBuf, reason: String },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } | CliError::Threads(_) => 2,
            CliError::Run(e) => match e {
                TrapError::Parameter { .. }
                | TrapError::GridTooCoarse { .. }
                | TrapError::Domain(_)
                | TrapError::Json(_)
                | TrapError::Format(_)
                | TrapError::Data(_) => 2,
                TrapError::Numerical(_)
                | TrapError::NoConvergence { .. }
                | TrapError::TruncationTooSmall { .. } => 3,
                TrapError::Io(_) => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "traplab",
    version,
    about = "Brownian survival among perturbed-lattice traps"
)]
pub struct Cli {
    /// Flat JSON config with dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; all cores by default. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// key=value, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SurviveArgs {
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma-separated times.
    #[arg(long)]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub configs: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// mc or proxy.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a perturbed lattice in a window.
    Sample(Overrides),
    /// Exact emptiness of growing squares against the hole functional.
    Emptiness(Overrides),
    /// Hole functional of a box or a region file.
    Holefun(Overrides),
    /// Principal Dirichlet eigenvalue of a (punched) box.
    Eig(Overrides),
    /// Eigenvalue sweep across the critical hole spacing.
    RauchTaylor(Overrides),
    /// Grid search of the variational functional.
    MrSweep(Overrides),
    /// Annealed survival probability.
    Survive(SurviveArgs),
    /// Fit a survival curve to its scaling form.
    Scaling(Overrides),
    /// Non-density box statistics.
    Densitybox(Overrides),
    /// Integrated density of states.
    Dos(Overrides),
    /// Emptiness of a fixed box as θ varies.
    PpConverge(Overrides),
}

impl Command {
    pub fn kind(&self) -> Kind {
        match self {
            Command::Sample(_) => Kind::Sample,
            Command::Emptiness(_) => Kind::Emptiness,
            Command::Holefun(_) => Kind::Holefun,
            Command::Eig(_) => Kind::Eig,
            Command::RauchTaylor(_) => Kind::RauchTaylor,
            Command::MrSweep(_) => Kind::MrSweep,
            Command::Survive(_) => Kind::Survive,
            Command::Scaling(_) => Kind::Scaling,
            Command::Densitybox(_) => Kind::Densitybox,
            Command::Dos(_) => Kind::Dos,
            Command::PpConverge(_) => Kind::PpConverge,
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Survive(a) => &a.overrides,
            Command::Sample(o)
            | Command::Emptiness(o)
            | Command::Holefun(o)
            | Command::Eig(o)
            | Command::RauchTaylor(o)
            | Command::MrSweep(o)
            | Command::Scaling(o)
            | Command::Densitybox(o)
            | Command::Dos(o)
            | Command::PpConverge(o) => o,
        }
    }
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn build_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        None => ExperimentConfig::defaults(kind),
        Some(path) => {
            let err = |reason: String| CliError::ConfigFile {
                path: path.clone(),
                reason,
            };
            let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            let doc: Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
            let m = doc
                .as_object()
                .ok_or_else(|| ConfigError::Shape("top level must be an object".into()))?;
            if let Some((k, _)) = m.iter().find(|(_, v)| v.is_object()) {
                return Err(ConfigError::Shape(format!(
                    "nested object under '{k}'; use dotted keys"
                ))
                .into());
            }
            ExperimentConfig::resolve(kind, m)?
        }
    };
    for a in &cli.command.overrides().set {
        cfg.set_text(a)?;
    }
    if let Command::Survive(a) = &cli.command {
        if let Some(v) = a.theta {
            cfg.set("theta", v.into())?;
        }
        if let Some(v) = a.d {
            cfg.set("d", v.into())?;
        }
        if let Some(v) = &a.t_grid {
            cfg.set_text(&format!("t_grid={v}"))?;
        }
        if let Some(v) = a.paths {
            cfg.set("mc.paths", v.into())?;
        }
        if let Some(v) = a.configs {
            cfg.set("configs", v.into())?;
        }
        if let Some(v) = a.dt {
            cfg.set("mc.dt", v.into())?;
        }
        if let Some(v) = &a.method {
            cfg.set("method", Value::String(v.clone()))?;
        }
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", s.into())?;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = build_config(cli)?;
    let job = || experiments::run(&cfg, &cli.out).map_err(CliError::from);
    match cli.threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(job),
    }
}
