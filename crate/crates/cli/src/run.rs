//! Solve and sweep orchestration and output files.
//!
//! Layout of an output directory:
//!
//! * `profiles/p{point:03}_s{snapshot}.csv`, columns `param_value,x,u`
//!   (`x0,x1,...` in higher dimensions), one file per stored snapshot;
//! * `bands.json`, one record per point and snapshot;
//! * `histogram.csv`, columns `param_value,bin_center,log2_density` for the
//!   final snapshot of every point, `-inf` for empty bins;
//! * `manifest.json`, every parameter used plus per-point results.
//!
//! Floats are written with 17 significant digits; `param_value` is `nan`
//! for a plain solve.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use nldiff::analysis::BandBoundReport;
use nldiff::solver::{Blowup, Envelope};
use nldiff::{
    check_band_bounds, density_histogram, detect_bands, fmt17, sample, solve, stable_tau, BandSummary, Execution,
    SolveResult,
};

use crate::config::{Config, InitialKind, SweepParameter, TauSetting, RANGE_GAP_FRACTION};
use crate::error::CliError;

pub const PROFILE_DIR: &str = "profiles";
pub const BANDS_FILE: &str = "bands.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const LOGISTIC_NOTE: &str = "sigmoid initial data are taken as the logistic 1/(1+exp(-l*x)); \
the unnormalized 1+exp(-l*x) takes values above 1 and cannot keep the initial data inside (0,1)";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses one per available core.
    pub workers: Option<usize>,
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub preset: Option<String>,
    /// Input configuration with all overrides applied; accepted by `--config`.
    pub config: Config,
    pub initial_formula: String,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    pub grid: GridRecord,
    pub horizon: f64,
    pub tau_setting: TauSetting,
    pub safety: f64,
    pub swept_parameter: Option<SweepParameter>,
    pub histogram: HistogramRecord,
    pub bands_file: &'static str,
    pub points: Vec<PointRecord>,
}

impl Manifest {
    pub fn blowups(&self) -> usize {
        self.points.iter().filter(|p| p.blowup.is_some()).count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRecord {
    pub dim: usize,
    pub nodes: usize,
    pub h_requested: f64,
    pub h: f64,
    pub snapped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRecord {
    pub file: &'static str,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub param_value: Option<f64>,
    pub tau: f64,
    /// `1 / (L_rho D)` for coordination games.
    pub stable_bound: Option<f64>,
    pub tau_exceeds_stable_bound: bool,
    pub steps: usize,
    pub snapshot_times: Vec<f64>,
    pub profiles: Vec<String>,
    pub gap_threshold: f64,
    pub initial_range: f64,
    pub final_bands: Option<usize>,
    pub sup_norm_violations: usize,
    pub envelope_warnings: usize,
    pub envelope: Option<Envelope>,
    pub lipschitz_series: Vec<f64>,
    pub blowup: Option<Blowup>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRecord {
    pub index: usize,
    pub param_value: Option<f64>,
    pub snapshot: usize,
    pub time: f64,
    pub initial_range: f64,
    #[serde(flatten)]
    pub summary: BandSummary,
    pub bounds: Option<BandBoundReport>,
}

struct PointOutcome {
    record: PointRecord,
    bands: Vec<BandRecord>,
    final_values: Option<Vec<f64>>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn param_str(p: Option<f64>) -> String {
    p.map_or_else(|| "nan".to_string(), fmt17)
}

fn profile_csv(param: Option<f64>, result: &SolveResult, snapshot: usize) -> String {
    let grid = &result.grid;
    let w = &result.snapshots[snapshot];
    let mut s = String::from("param_value,");
    if grid.dim() == 1 {
        s.push_str("x,");
    } else {
        for a in 0..grid.dim() {
            let _ = write!(s, "x{a},");
        }
    }
    s.push_str("u\n");
    let p = param_str(param);
    for (x, u) in grid.nodes().zip(w.values()) {
        s.push_str(&p);
        for c in x {
            s.push(',');
            s.push_str(&fmt17(*c));
        }
        s.push(',');
        s.push_str(&fmt17(*u));
        s.push('\n');
    }
    s
}

fn run_point(cfg: &Config, index: usize, param: Option<f64>, exec: Execution, out: &Path) -> Result<PointOutcome, CliError> {
    let spec = cfg.problem(param)?.with_execution(exec);
    let ctx = spec.context()?;
    let grid = ctx.grid().clone();
    let u0 = sample(&grid, |x| (spec.initial)(x))?;
    let rho = *ctx.recognition();

    let stable_bound = if rho.is_coordination() { Some(stable_tau(&ctx, &u0, 1.0)?) } else { None };
    let tau_exceeds_stable_bound = match (cfg.solver.tau, stable_bound) {
        (TauSetting::Fixed(t), Some(b)) => t > b,
        _ => false,
    };

    let (lo, hi) = u0.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let initial_range = hi - lo;
    let radius = rho.support_radius();
    let gap_threshold = match cfg.output.gap_threshold {
        Some(g) => g,
        None if radius.is_finite() => radius / 2.0,
        None if initial_range > 0.0 => RANGE_GAP_FRACTION * initial_range,
        None => 1.0,
    };

    let result = solve(&spec)?;
    let mut record = PointRecord {
        index,
        param_value: param,
        tau: result.tau,
        stable_bound,
        tau_exceeds_stable_bound,
        steps: result.steps,
        snapshot_times: result.snapshots.iter().map(|w| w.time()).collect(),
        profiles: Vec::new(),
        gap_threshold,
        initial_range,
        final_bands: None,
        sup_norm_violations: result.sup_norm_violations(),
        envelope_warnings: result.envelope_warnings(),
        envelope: result.envelope,
        lipschitz_series: result.lipschitz_series.clone(),
        blowup: result.blowup,
    };
    if result.blowup.is_some() {
        return Ok(PointOutcome { record, bands: Vec::new(), final_values: None });
    }

    let mut bands = Vec::with_capacity(result.snapshots.len());
    for (k, w) in result.snapshots.iter().enumerate() {
        let name = format!("{PROFILE_DIR}/p{index:03}_s{k}.csv");
        write_file(&out.join(&name), &profile_csv(param, &result, k))?;
        record.profiles.push(name);
        let summary = detect_bands(w.values(), gap_threshold)?;
        let bounds = radius.is_finite().then(|| check_band_bounds(&summary, initial_range, radius));
        bands.push(BandRecord { index, param_value: param, snapshot: k, time: w.time(), initial_range, summary, bounds });
    }
    record.final_bands = bands.last().map(|b| b.summary.count());
    let final_values = Some(result.final_snapshot().values().to_vec());
    Ok(PointOutcome { record, bands, final_values })
}

/// Runs every point of `cfg` and writes the output directory.
///
/// Sweep points that blow up are recorded in the manifest and skipped; a
/// plain solve that blows up returns [`CliError::Blowup`] after the manifest
/// is written.
pub fn run_config(cfg: &Config, opts: &RunOptions) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let out = &opts.out;
    let profiles = out.join(PROFILE_DIR);
    fs::create_dir_all(&profiles).map_err(|e| io_err(&profiles, e))?;

    let points = cfg.points();
    let probe = cfg.problem(points[0])?;
    let grid = probe.grid()?;
    let exec = if points.len() > 1 { Execution::Serial } else { Execution::Parallel };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<PointOutcome, CliError>> = pool.install(|| {
        points.par_iter().enumerate().map(|(i, &p)| run_point(cfg, i, p, exec, out)).collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let [lo, hi] = match cfg.output.histogram_range {
        Some(r) => r,
        None => {
            let (lo, hi) = outcomes
                .iter()
                .filter_map(|o| o.final_values.as_deref())
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                [-1.0, 1.0]
            } else if lo == hi {
                [lo - 0.5, hi + 0.5]
            } else {
                [lo, hi]
            }
        }
    };
    let bins = cfg.output.histogram_bins;
    let mut hist = String::from("param_value,bin_center,log2_density\n");
    for o in &outcomes {
        if let Some(values) = &o.final_values {
            let h = density_histogram(values, bins, lo, hi)?;
            let p = param_str(o.record.param_value);
            for (c, d) in h.bin_centers().iter().zip(&h.log2_density) {
                let _ = writeln!(hist, "{p},{},{}", fmt17(*c), fmt17(*d));
            }
        }
    }
    write_file(&out.join(HISTOGRAM_FILE), &hist)?;

    let band_records: Vec<&BandRecord> = outcomes.iter().flat_map(|o| &o.bands).collect();
    let bands_json = serde_json::to_string_pretty(&band_records).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out.join(BANDS_FILE), &(bands_json + "\n"))?;

    let mut notes = Vec::new();
    if cfg.initial.kind == InitialKind::Logistic {
        notes.push(LOGISTIC_NOTE.to_string());
    }
    let mut warnings = Vec::new();
    if grid.was_snapped() {
        warnings.push(format!("h = {} does not divide the domain; snapped to {}", grid.requested_h(), grid.h()));
    }
    for o in &outcomes {
        let r = &o.record;
        if r.tau_exceeds_stable_bound {
            warnings.push(format!(
                "point {}: tau = {} exceeds the maximum-principle bound {}",
                r.index,
                r.tau,
                r.stable_bound.unwrap_or(f64::NAN)
            ));
        }
        if let Some(b) = &r.blowup {
            warnings.push(format!("point {}: blowup at step {} (t = {})", r.index, b.step, b.time));
        }
    }

    let manifest = Manifest {
        tool: "nldiff",
        version: env!("CARGO_PKG_VERSION"),
        preset: opts.preset.clone(),
        config: cfg.clone(),
        initial_formula: cfg.initial(points[0])?.formula(),
        notes,
        warnings,
        grid: GridRecord {
            dim: grid.dim(),
            nodes: grid.len(),
            h_requested: grid.requested_h(),
            h: grid.h(),
            snapped: grid.was_snapped(),
        },
        horizon: cfg.solver.horizon,
        tau_setting: cfg.solver.tau,
        safety: cfg.solver.safety,
        swept_parameter: cfg.sweep_parameter(),
        histogram: HistogramRecord { file: HISTOGRAM_FILE, bins, lo, hi },
        bands_file: BANDS_FILE,
        points: outcomes.into_iter().map(|o| o.record).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out.join(MANIFEST_FILE), &(text + "\n"))?;

    if cfg.sweep.is_none() {
        if let Some(b) = &manifest.points[0].blowup {
            return Err(CliError::Blowup(format!("step {} (t = {}), node {}", b.step, b.time, b.node)));
        }
    }
    Ok(manifest)
}
