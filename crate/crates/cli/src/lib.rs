//! Command-line front end for the `nldiff` solver: TOML configs, experiment
//! presets, parameter sweeps and convergence studies.

pub mod config;
pub mod converge;
pub mod error;
pub mod presets;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, SweepConfig, TauSetting};
use crate::converge::{parse_resolution, run_converge, ConvergeOptions, ExampleId, DEFAULT_LADDER};
use crate::error::{CliError, EXIT_CONFIG, EXIT_OK};
use crate::presets::Preset;
use crate::run::{run_config, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "nldiff", version, about = "Nonlocal diffusion solver for Toeplitz games")]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preset or a config file (the default).
    Run(RunArgs),
    /// Convergence study against a closed-form example.
    Converge(ConvergeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Built-in experiment.
    #[arg(long, value_enum, conflicts_with = "config")]
    pub preset: Option<Preset>,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid spacing (snapped down to divide the domain).
    #[arg(long)]
    pub h: Option<f64>,
    /// Time step: "auto" or a number.
    #[arg(long)]
    pub tau: Option<TauSetting>,
    /// Final time.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Worker threads for sweep points.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Snapshot times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
    /// Replacement sweep values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergeArgs {
    #[arg(long, value_enum)]
    pub example: ExampleId,
    /// Ladder of `h:tau` pairs, each halving the previous one.
    #[arg(long, value_delimiter = ',', value_parser = parse_resolution)]
    pub resolutions: Option<Vec<(f64, f64)>>,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lower: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper: f64,
    /// Initial data `slope * x + intercept`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub slope: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub intercept: f64,
    /// Drift constant for dis-coordination (default 2) and advection (default 1).
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// Worker threads for the quadrature.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Directory for convergence.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Resolves the preset or config file and applies flag overrides.
    pub fn resolve(&self) -> Result<(Config, Option<String>), CliError> {
        let (mut cfg, preset) = match (&self.preset, &self.config) {
            (Some(p), None) => (p.config(), Some(p.name().to_string())),
            (None, Some(path)) => (Config::load(path)?, None),
            _ => return Err(CliError::Config("exactly one of --preset or --config is required".into())),
        };
        if let Some(h) = self.h {
            cfg.solver.h = h;
        }
        if let Some(t) = self.tau {
            cfg.solver.tau = t;
        }
        if let Some(t) = self.horizon {
            cfg.solver.horizon = t;
            if preset.as_deref() == Some(Preset::Propagation.name()) && self.snapshots.is_none() {
                cfg.solver.snapshots = (0..4).map(|k| t * k as f64 / 3.0).collect();
            }
        }
        if let Some(s) = &self.snapshots {
            cfg.solver.snapshots = s.clone();
        }
        if let Some(v) = &self.values {
            match cfg.sweep.as_mut() {
                Some(SweepConfig { values, .. }) => *values = v.clone(),
                None => return Err(CliError::Config("--values needs a sweep".into())),
            }
        }
        cfg.validate()?;
        Ok((cfg, preset))
    }
}

fn execute_run(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, preset) = args.resolve()?;
    let opts = RunOptions { out: args.out.clone(), workers: args.workers, preset };
    let manifest = run_config(&cfg, &opts)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} point(s), {} blowup(s), h = {}; outputs in {}",
        manifest.points.len(),
        manifest.blowups(),
        manifest.grid.h,
        args.out.display()
    );
    Ok(())
}

fn execute_converge(args: &ConvergeArgs) -> Result<(), CliError> {
    let mut opts = ConvergeOptions::new(args.example);
    opts.resolutions = args.resolutions.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    opts.horizon = args.horizon;
    opts.lower = args.lower;
    opts.upper = args.upper;
    opts.slope = args.slope;
    opts.intercept = args.intercept;
    opts.c = args.c;
    opts.out = args.out.clone();
    let run = || run_converge(&opts);
    let report = match args.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    print!("{}", report.to_csv());
    println!("order: {}", report.order);
    if report.excluded_coarsest {
        println!("coarsest level excluded from the fit");
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Some(Command::Run(a)) => execute_run(a),
        Some(Command::Converge(a)) => execute_converge(a),
        None => execute_run(&cli.run),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
