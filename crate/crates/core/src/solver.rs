//! Explicit forward-Euler time stepping of `u_t = G[u] (+ f(u, x, t))`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::analysis::lipschitz_estimate;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{sample, sup_norm, Domain, Grid, GridFunction};
use crate::kernels::KernelSpec;
use crate::nonlocal::NonlocalContext;
use crate::recognition::RecognitionSpec;

/// Scalar field over the domain.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Forcing term `f(u, x, t)`.
pub type Forcing = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;

pub const DEFAULT_SAFETY: f64 = 0.5;

/// Default cap on the total size of stored snapshots (1 GiB).
pub const DEFAULT_SNAPSHOT_CAP: u64 = 1 << 30;

/// Time step returned by [`stable_tau`] when `rho'` is constant and no step
/// restriction exists.
pub const UNCONSTRAINED_TAU: f64 = 1.0;

/// Absolute slack allowed on the per-step sup-norm monitor.
pub const SUP_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub kernel: KernelSpec,
    pub recognition: RecognitionSpec,
    pub initial: ScalarField,
    pub forcing: Option<Forcing>,
    pub horizon: f64,
    pub h: f64,
    pub tau: TimeStep,
    /// Requested output times; `0` and the horizon are always stored.
    pub snapshot_times: Vec<f64>,
    pub safety: f64,
    pub snapshot_cap_bytes: u64,
    pub execution: Execution,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("domain", &self.domain)
            .field("kernel", &self.kernel)
            .field("recognition", &self.recognition)
            .field("forcing", &self.forcing.is_some())
            .field("horizon", &self.horizon)
            .field("h", &self.h)
            .field("tau", &self.tau)
            .field("snapshot_times", &self.snapshot_times)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(
        domain: Domain,
        kernel: KernelSpec,
        recognition: RecognitionSpec,
        initial: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        horizon: f64,
        h: f64,
    ) -> Self {
        Self {
            domain,
            kernel,
            recognition,
            initial: Arc::new(initial),
            forcing: None,
            horizon,
            h,
            tau: TimeStep::Auto,
            snapshot_times: Vec::new(),
            safety: DEFAULT_SAFETY,
            snapshot_cap_bytes: DEFAULT_SNAPSHOT_CAP,
            execution: Execution::default(),
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = TimeStep::Fixed(tau);
        self
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.execution = exec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidProblem(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        if let TimeStep::Fixed(tau) = self.tau {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::InvalidProblem(format!("tau must be positive, got {tau}")));
            }
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::InvalidProblem(format!("safety must lie in (0, 1], got {}", self.safety)));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.horizon)) {
            return Err(Error::InvalidProblem(format!("snapshot time {t} outside [0, {}]", self.horizon)));
        }
        self.kernel.validate()?;
        self.recognition.validate()
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(self.domain.clone(), self.h)?))
    }

    pub fn context(&self) -> Result<NonlocalContext> {
        Ok(NonlocalContext::new(self.grid()?, self.kernel.clone(), self.recognition)?
            .with_execution(self.execution))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonitorKind {
    /// Sup norm grew although the discrete maximum principle applies.
    SupNormIncrease { before: f64, after: f64 },
    /// Discrete Lipschitz estimate above the regularity envelope (warning).
    LipschitzEnvelope { estimate: f64, envelope: f64 },
    NonFinite { node: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorFlag {
    pub step: usize,
    pub kind: MonitorKind,
}

/// Constants of the Lipschitz envelope `(L0 + C t) e^{c t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub l0: f64,
    pub growth: f64,
    pub rate: f64,
}

impl Envelope {
    pub fn at(&self, t: f64) -> f64 {
        (self.l0 + self.growth * t) * (self.rate * t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Blowup {
    pub step: usize,
    pub time: f64,
    pub node: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub grid: Arc<Grid>,
    pub tau: f64,
    pub steps: usize,
    /// Includes `t = 0` and the final stored time, strictly increasing.
    pub snapshots: Vec<GridFunction>,
    /// Sup norm after each step, starting with the initial condition.
    pub sup_norm_series: Vec<f64>,
    /// Discrete Lipschitz estimate of each snapshot.
    pub lipschitz_series: Vec<f64>,
    pub monitor_flags: Vec<MonitorFlag>,
    pub envelope: Option<Envelope>,
    pub blowup: Option<Blowup>,
}

impl SolveResult {
    pub fn final_snapshot(&self) -> &GridFunction {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    pub fn sup_norm_violations(&self) -> usize {
        self.count(|k| matches!(k, MonitorKind::SupNormIncrease { .. }))
    }

    pub fn envelope_warnings(&self) -> usize {
        self.count(|k| matches!(k, MonitorKind::LipschitzEnvelope { .. }))
    }

    fn count(&self, pred: impl Fn(&MonitorKind) -> bool) -> usize {
        self.monitor_flags.iter().filter(|f| pred(&f.kind)).count()
    }
}

/// Largest step for which the discrete maximum principle holds, times `safety`.
///
/// Uses `L_rho` on `[-2|u0|, 2|u0|]` and the larger of the pointwise kernel
/// bound and the largest discrete row mass.
pub fn stable_tau(ctx: &NonlocalContext, u0: &GridFunction, safety: f64) -> Result<f64> {
    let rho = ctx.recognition();
    if !rho.is_coordination() {
        return Err(Error::NotCoordination);
    }
    let r = u0.sup_norm();
    let l_rho = rho.lipschitz_bound(-2.0 * r, 2.0 * r);
    if l_rho == 0.0 {
        return Ok(safety * UNCONSTRAINED_TAU);
    }
    let d = ctx.rows().sup_row_bound().max(ctx.rows().max_discrete_l1());
    if d == 0.0 {
        return Ok(safety * UNCONSTRAINED_TAU);
    }
    Ok(safety / (l_rho * d))
}

/// One explicit step `w + tau (G[w] + f(w, x, t))`.
pub fn step(
    ctx: &NonlocalContext,
    w: &GridFunction,
    tau: f64,
    forcing: Option<&Forcing>,
) -> Result<GridFunction> {
    let g = ctx.apply(w)?;
    let grid = ctx.grid();
    let t = w.time();
    let next: Vec<f64> = w
        .values()
        .iter()
        .zip(g.values())
        .enumerate()
        .map(|(i, (&v, &gv))| {
            let f = forcing.map_or(0.0, |f| f(v, grid.node(i), t));
            v + tau * (gv + f)
        })
        .collect();
    GridFunction::new(grid.clone(), next, t + tau)
}

/// Snapshot step indices for the requested times; always includes 0 and `steps`.
fn snapshot_steps(times: &[f64], tau: f64, steps: usize, horizon: f64) -> Vec<usize> {
    let time_of = |k: usize| if k == steps { horizon } else { k as f64 * tau };
    let mut idx: Vec<usize> = times
        .iter()
        .map(|&t| {
            let k = ((t / tau).round() as usize).min(steps);
            // The final step may be shorter than tau.
            [k.saturating_sub(1), k, (k + 1).min(steps)]
                .into_iter()
                .min_by(|a, b| (time_of(*a) - t).abs().total_cmp(&(time_of(*b) - t).abs()))
                .unwrap_or(k)
        })
        .collect();
    idx.push(0);
    idx.push(steps);
    idx.sort_unstable();
    idx.dedup();
    idx
}

fn envelope(ctx: &NonlocalContext, u0: &GridFunction) -> Option<Envelope> {
    let rho = ctx.recognition();
    if !rho.is_coordination() {
        return None;
    }
    let r = u0.sup_norm();
    let w = rho.sup_bound(-2.0 * r, 2.0 * r);
    let l_rho = rho.lipschitz_bound(-2.0 * r, 2.0 * r);
    Some(Envelope {
        l0: lipschitz_estimate(u0),
        growth: w * ctx.kernel().lipschitz_constant(),
        rate: l_rho * ctx.rows().max_discrete_l1(),
    })
}

pub fn solve(spec: &ProblemSpec) -> Result<SolveResult> {
    spec.validate()?;
    let ctx = spec.context()?;
    let grid = ctx.grid().clone();
    let u0 = sample(&grid, |x| (spec.initial)(x))?;

    let tau = match spec.tau {
        TimeStep::Fixed(tau) => tau,
        TimeStep::Auto => stable_tau(&ctx, &u0, spec.safety)?,
    };
    let steps = if spec.horizon == 0.0 {
        0
    } else {
        (spec.horizon / tau - 1e-9).ceil().max(1.0) as usize
    };
    let time_of = |k: usize| if k == steps { spec.horizon } else { k as f64 * tau };

    let stored = snapshot_steps(&spec.snapshot_times, tau, steps, spec.horizon);
    let bytes = (stored.len() * grid.len() * std::mem::size_of::<f64>()) as u64;
    if bytes > spec.snapshot_cap_bytes {
        return Err(Error::SnapshotCap { bytes, cap: spec.snapshot_cap_bytes });
    }

    let monitor_max = ctx.recognition().is_coordination() && spec.forcing.is_none();
    let env = envelope(&ctx, &u0);

    let mut values = u0.values().to_vec();
    let mut g = vec![0.0; grid.len()];
    let mut sup_norm_series = Vec::with_capacity(steps + 1);
    sup_norm_series.push(sup_norm(&values));
    let mut snapshots = vec![u0];
    let mut lipschitz_series = vec![lipschitz_estimate(&snapshots[0])];
    let mut next_snapshot = stored.iter().skip(1).peekable();
    let mut monitor_flags = Vec::new();
    let mut blowup = None;

    for k in 0..steps {
        let t = time_of(k);
        let dt = if k + 1 == steps { spec.horizon - t } else { tau };
        ctx.apply_values(&values, &mut g);
        for (i, (v, gv)) in values.iter_mut().zip(&g).enumerate() {
            let f = spec.forcing.as_ref().map_or(0.0, |f| f(*v, grid.node(i), t));
            *v += dt * (gv + f);
        }
        let step_no = k + 1;
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            monitor_flags.push(MonitorFlag { step: step_no, kind: MonitorKind::NonFinite { node } });
            blowup = Some(Blowup { step: step_no, time: time_of(step_no), node });
            break;
        }
        let before = *sup_norm_series.last().unwrap();
        let after = sup_norm(&values);
        sup_norm_series.push(after);
        if monitor_max && after > before + SUP_NORM_TOLERANCE {
            monitor_flags.push(MonitorFlag { step: step_no, kind: MonitorKind::SupNormIncrease { before, after } });
        }

        let snap = next_snapshot.peek().is_some_and(|&&s| s == step_no);
        if env.is_some() || snap {
            let w = GridFunction::new(grid.clone(), values.clone(), time_of(step_no))?;
            let estimate = lipschitz_estimate(&w);
            if let Some(env) = env {
                let bound = env.at(w.time());
                if estimate > bound * (1.0 + 1e-9) {
                    monitor_flags.push(MonitorFlag {
                        step: step_no,
                        kind: MonitorKind::LipschitzEnvelope { estimate, envelope: bound },
                    });
                }
            }
            if snap {
                next_snapshot.next();
                lipschitz_series.push(estimate);
                snapshots.push(w);
            }
        }
    }

    Ok(SolveResult {
        grid,
        tau,
        steps,
        snapshots,
        sup_norm_series,
        lipschitz_series,
        monitor_flags,
        envelope: env,
        blowup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn stable_tau_examples() {
        let grid = Arc::new(Grid::build(unit(), 0.1).unwrap());
        let ctx = NonlocalContext::new(grid.clone(), KernelSpec::uniform(), RecognitionSpec::quad_coord()).unwrap();
        let u0 = sample(&grid, |x| x[0]).unwrap();
        assert_relative_eq!(stable_tau(&ctx, &u0, 0.5).unwrap(), 0.5, max_relative = 1e-12);

        let scaled = NonlocalContext::new(grid.clone(), KernelSpec::uniform(), RecognitionSpec::quad_coord().scaled(4.0)).unwrap();
        assert_relative_eq!(stable_tau(&scaled, &u0, 0.5).unwrap(), 0.125, max_relative = 1e-12);

        let anti = NonlocalContext::new(grid.clone(), KernelSpec::uniform(), RecognitionSpec::quad_anticoord()).unwrap();
        assert_eq!(stable_tau(&anti, &u0, 0.5), Err(Error::NotCoordination));
    }

    #[test]
    fn stable_tau_bump_gaussian() {
        let grid = Arc::new(Grid::build(Domain::interval(-0.5, 0.5).unwrap(), 0.01).unwrap());
        let rho = RecognitionSpec::bump(0.2);
        let ctx = NonlocalContext::new(grid.clone(), KernelSpec::gaussian(0.5), rho).unwrap();
        let u0 = sample(&grid, |x| 2.0 * x[0]).unwrap();
        let l_rho = rho.lipschitz_bound(-2.0, 2.0);
        assert_relative_eq!(stable_tau(&ctx, &u0, 0.5).unwrap(), 0.5 / (l_rho * 0.7978845608), max_relative = 1e-9);
    }

    #[test]
    fn single_step_examples() {
        let grid = Arc::new(Grid::build(unit(), 0.25).unwrap());
        let ctx = NonlocalContext::new(grid.clone(), KernelSpec::uniform(), RecognitionSpec::quad_coord()).unwrap();
        let w = sample(&grid, |x| x[0]).unwrap();
        let next = step(&ctx, &w, 0.1, None).unwrap();
        assert_relative_eq!(next.values()[2], 0.4875, epsilon = 1e-15);
        assert_relative_eq!(next.time(), 0.1);

        let flat = sample(&grid, |_| 3.0).unwrap();
        assert_eq!(step(&ctx, &flat, 0.1, None).unwrap().values(), flat.values());

        let lin = NonlocalContext::new(grid.clone(), KernelSpec::uniform(), RecognitionSpec::linear(2.0)).unwrap();
        let next = step(&lin, &w, 0.05, None).unwrap();
        for (a, b) in next.values().iter().zip(w.values()) {
            assert_relative_eq!(a - b, 0.1, epsilon = 1e-14);
        }
    }

    #[test]
    fn step_reports_non_finite() {
        let grid = Arc::new(Grid::build(unit(), 0.25).unwrap());
        let ctx = NonlocalContext::new(grid.clone(), KernelSpec::uniform(), RecognitionSpec::quad_anticoord()).unwrap();
        let w = sample(&grid, |x| 1e300 * x[0]).unwrap();
        assert!(matches!(step(&ctx, &w, 1e10, None), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_horizon_returns_initial_condition() {
        let spec = ProblemSpec::new(unit(), KernelSpec::uniform(), RecognitionSpec::quad_coord(), |x| x[0], 0.0, 0.1);
        let result = solve(&spec).unwrap();
        assert_eq!(result.steps, 0);
        assert_eq!(result.snapshots.len(), 1);
        assert_eq!(result.snapshots[0].values()[3], 0.30000000000000004);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let spec = ProblemSpec::new(unit(), KernelSpec::uniform(), RecognitionSpec::quad_coord(), |x| x[0], 1.0, 0.1)
            .with_tau(0.3)
            .with_snapshots(vec![0.5, 0.95]);
        let result = solve(&spec).unwrap();
        // Steps at 0, 0.3, 0.6, 0.9, 1.0 (last one shortened).
        assert_eq!(result.steps, 4);
        let times: Vec<f64> = result.snapshots.iter().map(|s| s.time()).collect();
        assert_eq!(times.len(), 4);
        assert_eq!(times[0], 0.0);
        assert_relative_eq!(times[1], 0.6);
        assert_relative_eq!(times[2], 0.9);
        assert_eq!(times[3], 1.0);
        assert_eq!(result.sup_norm_series.len(), 5);
        assert_eq!(result.lipschitz_series.len(), 4);
    }

    #[test]
    fn max_principle_and_envelope_hold() {
        let spec = ProblemSpec::new(
            Domain::interval(-0.5, 0.5).unwrap(),
            KernelSpec::gaussian(0.5),
            RecognitionSpec::bump(0.2),
            |x| 2.0 * x[0],
            2.0,
            0.02,
        );
        let result = solve(&spec).unwrap();
        assert_eq!(result.sup_norm_violations(), 0);
        assert!(result.blowup.is_none());
        assert!(result.sup_norm_series.windows(2).all(|w| w[1] <= w[0] + SUP_NORM_TOLERANCE));
    }

    #[test]
    fn anticoordination_blowup_is_reported() {
        let spec = ProblemSpec::new(unit(), KernelSpec::uniform(), RecognitionSpec::quad_anticoord(), |x| x[0], 1e5, 0.25)
            .with_tau(100.0);
        let result = solve(&spec).unwrap();
        let b = result.blowup.expect("blowup");
        assert!(b.step < result.steps);
        assert!(matches!(result.monitor_flags.last().unwrap().kind, MonitorKind::NonFinite { .. }));
    }

    #[test]
    fn auto_tau_requires_coordination() {
        let spec = ProblemSpec::new(unit(), KernelSpec::uniform(), RecognitionSpec::linear(1.0), |x| x[0], 1.0, 0.1);
        assert_eq!(solve(&spec).unwrap_err(), Error::NotCoordination);
    }

    #[test]
    fn snapshot_cap_is_enforced() {
        let mut spec = ProblemSpec::new(unit(), KernelSpec::uniform(), RecognitionSpec::quad_coord(), |x| x[0], 1.0, 0.01)
            .with_snapshots(vec![0.25, 0.5, 0.75]);
        spec.snapshot_cap_bytes = 1000;
        assert!(matches!(solve(&spec), Err(Error::SnapshotCap { .. })));
    }

    #[test]
    fn invalid_problems() {
        let base = ProblemSpec::new(unit(), KernelSpec::uniform(), RecognitionSpec::quad_coord(), |x| x[0], 1.0, 0.1);
        assert!(solve(&base.clone().with_tau(-1.0)).is_err());
        assert!(solve(&base.clone().with_snapshots(vec![2.0])).is_err());
        let mut neg = base.clone();
        neg.horizon = -1.0;
        assert!(solve(&neg).is_err());
    }

    #[test]
    fn zero_forcing_is_bit_identical() {
        let base = ProblemSpec::new(
            Domain::interval(-0.5, 0.5).unwrap(),
            KernelSpec::gaussian(0.5),
            RecognitionSpec::bump(0.2),
            |x| 1.5 * x[0],
            1.0,
            0.02,
        );
        let plain = solve(&base).unwrap();
        let forced = solve(&base.clone().with_forcing(|_, _, _| 0.0)).unwrap();
        assert_eq!(plain.final_snapshot().values(), forced.final_snapshot().values());
    }
}
