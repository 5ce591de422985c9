//! Convergence studies against the closed-form examples.

use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;

use nldiff::oracles::ConvergenceReport;
use nldiff::{convergence_study, Domain, Execution, KernelSpec, OracleExample, OracleSpec};

use crate::error::CliError;

pub const CONVERGENCE_FILE: &str = "convergence.csv";

/// Default ladder: `h` and `tau` halved twice from `(1/25, 1/50)`.
pub const DEFAULT_LADDER: [(f64, f64); 3] = [(1.0 / 25.0, 1.0 / 50.0), (1.0 / 50.0, 1.0 / 100.0), (1.0 / 100.0, 1.0 / 200.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleId {
    /// Uniform kernel, rho = -z^2/2.
    #[value(alias = "1")]
    Coordination,
    /// Uniform kernel, rho = z^2/2.
    #[value(alias = "2")]
    Anticoordination,
    /// Uniform kernel, rho = c z.
    #[value(alias = "3")]
    DisCoordination,
    /// Uniform kernel, rho = -z^2/2 + c z.
    #[value(alias = "4")]
    Advection,
}

#[derive(Debug, Clone)]
pub struct ConvergeOptions {
    pub example: ExampleId,
    pub resolutions: Vec<(f64, f64)>,
    pub horizon: f64,
    pub lower: f64,
    pub upper: f64,
    /// `u0 = slope * x + intercept`.
    pub slope: f64,
    pub intercept: f64,
    /// Drift constant of the dis-coordination and advection examples.
    pub c: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ConvergeOptions {
    pub fn new(example: ExampleId) -> Self {
        Self {
            example,
            resolutions: DEFAULT_LADDER.to_vec(),
            horizon: 1.0,
            lower: 0.0,
            upper: 1.0,
            slope: 1.0,
            intercept: 0.0,
            c: None,
            out: None,
        }
    }

    pub fn oracle(&self) -> Result<OracleSpec, CliError> {
        let example = match self.example {
            ExampleId::Coordination => OracleExample::UnstructuredCoord,
            ExampleId::Anticoordination => OracleExample::UnstructuredAnticoord,
            ExampleId::DisCoordination => OracleExample::DisCoordination { c: self.c.unwrap_or(2.0) },
            ExampleId::Advection => OracleExample::CoordAdvect { c: self.c.unwrap_or(1.0) },
        };
        let domain = Domain::interval(self.lower, self.upper)?;
        let (a, b) = (self.slope, self.intercept);
        Ok(OracleSpec::new(example, domain, KernelSpec::uniform(), move |x| a * x[0] + b)?)
    }
}

/// Parses one `h:tau` pair.
pub fn parse_resolution(pair: &str) -> Result<(f64, f64), String> {
    let (h, tau) = pair.split_once(':').ok_or_else(|| format!("expected h:tau, got {pair:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v:?}"));
    Ok((parse(h)?, parse(tau)?))
}

pub fn run_converge(opts: &ConvergeOptions) -> Result<ConvergenceReport, CliError> {
    let oracle = opts.oracle()?;
    let report = convergence_study(&oracle, &opts.resolutions, opts.horizon, Execution::Parallel)?;
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(CONVERGENCE_FILE);
        fs::write(&path, report.to_csv()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}
