//! Command-line pipeline: `mhcloc <subcommand> --config <path> [overrides]`.

pub mod config;
pub mod failure;
pub mod stages;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::PipelineConfig;
pub use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "mhcloc", version, about = "Facility placement from call detail records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and clean towers and calls.
    Ingest(RunArgs),
    /// Infer night-time residence per subscriber and tower.
    Residence(RunArgs),
    /// Group towers into residential regions.
    Cluster(RunArgs),
    /// Build (or reuse cached) travel distance and duration matrices.
    Costs(RunArgs),
    /// Place facilities optimally for both cost kinds.
    Solve(RunArgs),
    /// Compare current and optimized placements.
    Evaluate(RunArgs),
    /// Generate a synthetic dataset at the configured input paths.
    Synth(RunArgs),
    /// Run ingest through evaluate.
    All(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProviderArg {
    Synthetic,
    Http,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for stage artifacts.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Directory for cached cost matrices.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Number of facilities to open.
    #[arg(long)]
    pub m: Option<usize>,
    /// Total number of residential regions.
    #[arg(long)]
    pub total_k: Option<usize>,
    /// Relative optimality gap at which the solver stops.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Travel cost source.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Ignore cached cost matrices.
    #[arg(long)]
    pub refresh_costs: bool,
    /// Override any config value, e.g. `--set synth.noise=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn load_config(&self) -> Result<PipelineConfig, Failure> {
        let mut cfg = PipelineConfig::load(&self.config, &self.set)?;
        if let Some(d) = &self.output_dir {
            cfg.paths.output_dir = d.clone();
        }
        if let Some(d) = &self.cache_dir {
            cfg.paths.cache_dir = d.clone();
        }
        if let Some(m) = self.m {
            cfg.solver.m = m;
        }
        if let Some(k) = self.total_k {
            cfg.cluster.total_k = k;
        }
        if let Some(e) = self.epsilon {
            cfg.solver.epsilon = e;
        }
        if let Some(p) = self.provider {
            cfg.costs.provider = match p {
                ProviderArg::Synthetic => config::ProviderKind::Synthetic,
                ProviderArg::Http => config::ProviderKind::Http,
            };
        }
        let issues = cfg.validate();
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(Failure::Config(issues))
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let (Command::Ingest(a)
    | Command::Residence(a)
    | Command::Cluster(a)
    | Command::Costs(a)
    | Command::Solve(a)
    | Command::Evaluate(a)
    | Command::Synth(a)
    | Command::All(a)) = &cli.command;
    let cfg = a.load_config()?;
    match &cli.command {
        Command::Ingest(_) => stages::ingest(&cfg, out),
        Command::Residence(_) => stages::residence(&cfg, out),
        Command::Cluster(_) => stages::cluster(&cfg, out),
        Command::Costs(_) => stages::costs(&cfg, a.refresh_costs, out),
        Command::Solve(_) => stages::solve_stage(&cfg, out),
        Command::Evaluate(_) => stages::evaluate(&cfg, out),
        Command::Synth(_) => stages::synth(&cfg, out),
        Command::All(_) => stages::all(&cfg, a.refresh_costs, out),
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_args<I, S>(args: I, out: &mut dyn Write) -> Result<(), Failure>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once("mhcloc".into()).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| Failure::Config(vec![e.to_string()]))?;
    run(&cli, out)
}
