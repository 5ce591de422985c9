//! Closed-form solutions for unstructured and dis-coordination games, and the
//! convergence study that compares the scheme against them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fmt17;
use crate::grid::{Domain, GridFunction};
use crate::kernels::KernelSpec;
use crate::recognition::RecognitionSpec;
use crate::solver::{solve, ProblemSpec, ScalarField};

/// Total node count of the midpoint rule behind oracle means and norms.
pub const ORACLE_NODES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "example", rename_all = "snake_case")]
pub enum OracleExample {
    /// Uniform kernel, `rho = -z^2/2`: relaxation to the mean at rate `e^{-t}`.
    UnstructuredCoord,
    /// Uniform kernel, `rho = z^2/2`: growth away from the mean at rate `e^{t}`.
    UnstructuredAnticoord,
    /// `rho = c z` with any kernel: `u0 + t c |K(x, .)|_1`.
    DisCoordination { c: f64 },
    /// Uniform kernel, `rho = -z^2/2 + c z`: the coordination solution plus `c t`.
    CoordAdvect { c: f64 },
}

impl OracleExample {
    pub fn recognition(&self) -> RecognitionSpec {
        match *self {
            OracleExample::UnstructuredCoord => RecognitionSpec::quad_coord(),
            OracleExample::UnstructuredAnticoord => RecognitionSpec::quad_anticoord(),
            OracleExample::DisCoordination { c } => RecognitionSpec::linear(c),
            OracleExample::CoordAdvect { c } => RecognitionSpec::quad_coord_advect(c),
        }
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Midpoint-rule average of `f` over the domain using about [`ORACLE_NODES`]
/// points. Returns the average and the node count.
fn midpoint_mean(domain: &Domain, f: impl Fn(&[f64]) -> f64) -> (f64, usize) {
    let dim = domain.dim();
    let per_axis = (ORACLE_NODES as f64).powf(1.0 / dim as f64).ceil() as usize;
    let total = per_axis.pow(dim as u32);
    let lengths = domain.lengths();
    let mut x = vec![0.0; dim];
    let sum = compensated_sum((0..total).map(|flat| {
        let mut rem = flat;
        for axis in (0..dim).rev() {
            let k = rem % per_axis;
            rem /= per_axis;
            x[axis] = domain.lower()[axis] + (k as f64 + 0.5) * lengths[axis] / per_axis as f64;
        }
        f(&x)
    }));
    (sum / total as f64, total)
}

#[derive(Clone)]
pub struct OracleSpec {
    example: OracleExample,
    domain: Domain,
    kernel: KernelSpec,
    u0: ScalarField,
    mean: f64,
    mean_nodes: usize,
}

impl fmt::Debug for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleSpec")
            .field("example", &self.example)
            .field("domain", &self.domain)
            .field("kernel", &self.kernel)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

impl OracleSpec {
    pub fn new(
        example: OracleExample,
        domain: Domain,
        kernel: KernelSpec,
        u0: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        kernel.validate()?;
        let needs_uniform = !matches!(example, OracleExample::DisCoordination { .. });
        if needs_uniform && !kernel.is_uniform() {
            return Err(Error::UnsupportedOracle(format!("{example:?} requires the uniform kernel")));
        }
        let u0: ScalarField = Arc::new(u0);
        let (mean, mean_nodes) = midpoint_mean(&domain, |x| u0(x));
        Ok(Self { example, domain, kernel, u0, mean, mean_nodes })
    }

    /// Example with the uniform kernel.
    pub fn unstructured(
        example: OracleExample,
        domain: Domain,
        u0: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(example, domain, KernelSpec::uniform(), u0)
    }

    pub fn example(&self) -> OracleExample {
        self.example
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Mean of the initial condition over the domain.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Node count behind [`Self::mean`].
    pub fn mean_nodes(&self) -> usize {
        self.mean_nodes
    }

    pub fn initial(&self, x: &[f64]) -> f64 {
        (self.u0)(x)
    }

    /// Continuum `|K(x, .)|_{L^1(domain)}`.
    pub fn kernel_mass(&self, x: &[f64]) -> f64 {
        if self.kernel.is_uniform() {
            return 1.0;
        }
        let diff = |y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a - b).collect() };
        let (avg, _) = midpoint_mean(&self.domain, |y| self.kernel.eval_offset(&self.domain, &diff(y)));
        avg * self.domain.volume()
    }

    pub fn closed_form(&self, x: &[f64], t: f64) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        let u0 = (self.u0)(x);
        let m = self.mean;
        Ok(match self.example {
            OracleExample::UnstructuredCoord => (-t).exp() * (u0 - m) + m,
            OracleExample::UnstructuredAnticoord => t.exp() * (u0 - m) + m,
            OracleExample::DisCoordination { c } => u0 + t * c * self.kernel_mass(x),
            OracleExample::CoordAdvect { c } => (-t).exp() * (u0 - m) + m + c * t,
        })
    }

    /// Problem for the scheme at resolution `(h, tau)` up to `horizon`.
    pub fn problem(&self, h: f64, tau: f64, horizon: f64) -> ProblemSpec {
        let u0 = self.u0.clone();
        ProblemSpec::new(
            self.domain.clone(),
            self.kernel.clone(),
            self.example.recognition(),
            move |x| u0(x),
            horizon,
            h,
        )
        .with_tau(tau)
    }

    /// Sup-norm distance between a computed profile and the closed form at its time.
    pub fn sup_error(&self, w: &GridFunction) -> Result<f64> {
        let grid = w.grid();
        let mut err = 0.0_f64;
        for (x, v) in grid.nodes().zip(w.values()) {
            err = err.max((v - self.closed_form(x, w.time())?).abs());
        }
        Ok(err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub h: f64,
    pub tau: f64,
    pub sup_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum OrderEstimate {
    /// Every error vanished.
    Exact,
    InsufficientData,
    Fitted(f64),
}

impl fmt::Display for OrderEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderEstimate::Exact => write!(f, "exact"),
            OrderEstimate::InsufficientData => write!(f, "insufficient data"),
            OrderEstimate::Fitted(p) => write!(f, "{p:.4}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ErrorRow>,
    pub order: OrderEstimate,
    /// Whether the coarsest row was left out of the fit as pre-asymptotic.
    pub excluded_coarsest: bool,
}

impl ConvergenceReport {
    /// `h,tau,sup_error` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,tau,sup_error\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", fmt17(r.h), fmt17(r.tau), fmt17(r.sup_error)));
        }
        out
    }
}

/// Least-squares slope of `log(error)` against `log(tau + h)`.
pub fn fit_order(rows: &[ErrorRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_error > 0.0)
        .map(|r| ((r.tau + r.h).ln(), r.sup_error.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn is_halved(prev: f64, next: f64) -> bool {
    ((prev / 2.0 - next) / next).abs() <= 1e-9
}

/// Solves the example at each `(h, tau)` to `horizon` and fits the
/// convergence order.
pub fn convergence_study(
    spec: &OracleSpec,
    resolutions: &[(f64, f64)],
    horizon: f64,
    exec: Execution,
) -> Result<ConvergenceReport> {
    if resolutions.is_empty() {
        return Err(Error::InvalidProblem("convergence study needs at least one resolution".into()));
    }
    for w in resolutions.windows(2) {
        if !is_halved(w[0].0, w[1].0) || !is_halved(w[0].1, w[1].1) {
            return Err(Error::InvalidProblem(format!(
                "resolutions must halve both h and tau: {:?} -> {:?}",
                w[0], w[1]
            )));
        }
    }

    let results = exec.map(resolutions, |&(h, tau)| -> Result<(ErrorRow, f64)> {
        let problem = spec.problem(h, tau, horizon).with_execution(Execution::Serial);
        let result = solve(&problem)?;
        if let Some(b) = result.blowup {
            return Err(Error::Blowup { step: b.step, time: b.time, h });
        }
        let sup_error = spec.sup_error(result.final_snapshot())?;
        Ok((ErrorRow { h, tau, sup_error }, result.snapshots[0].sup_norm()))
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut u0_norm = 0.0_f64;
    for r in results {
        let (row, norm) = r?;
        u0_norm = u0_norm.max(norm);
        rows.push(row);
    }

    let max_err = rows.iter().map(|r| r.sup_error).fold(0.0, f64::max);
    if max_err <= 1e-12 * u0_norm.max(1.0) {
        return Ok(ConvergenceReport { rows, order: OrderEstimate::Exact, excluded_coarsest: false });
    }
    if rows.len() < 3 {
        return Ok(ConvergenceReport { rows, order: OrderEstimate::InsufficientData, excluded_coarsest: false });
    }
    let excluded_coarsest = rows[0].sup_error > 0.5 * u0_norm;
    let fit_rows = if excluded_coarsest { &rows[1..] } else { &rows[..] };
    let order = fit_order(fit_rows).map_or(OrderEstimate::InsufficientData, OrderEstimate::Fitted);
    Ok(ConvergenceReport { rows, order, excluded_coarsest })
}
