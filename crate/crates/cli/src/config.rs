//! Run configuration: TOML schema, validation and conversion into solver
//! problems.
//!
//! ```toml
//! [domain]
//! lower = [-0.5]
//! upper = [0.5]
//!
//! [kernel]
//! family = "gaussian"        # uniform | gaussian | table
//! width = 0.5                # gaussian only
//! # path = "kernel.csv"      # table only, resolved against the config file
//! # lower_bound = 0.1        # optional, checked on the grid
//!
//! [recognition]
//! family = "bump"            # quad_coord | quad_anticoord | linear | bump | quad_coord_advect
//! r = 0.2                    # bump only
//! # c = 2.0                  # linear and quad_coord_advect
//! # scale = 1.0
//!
//! [initial]
//! kind = "linear"            # linear | logistic | constant
//! slope = 1.0                # linear: slope * x0 + intercept
//! # intercept = 0.0
//! # steepness = 5.0          # logistic: 1 / (1 + exp(-steepness * x0))
//! # value = 0.3              # constant
//!
//! [forcing]                  # optional
//! value = 0.0
//!
//! [solver]
//! T = 20.0
//! h = 0.005
//! tau = "auto"               # or a positive number
//! # safety = 0.5
//! # snapshots = [0.0, 10.0, 20.0]
//! # snapshot_cap_bytes = 1073741824
//!
//! [sweep]                    # optional
//! parameter = "initial_slope"  # initial_slope | sigmoid_parameter | support_radius
//! values = [0.0, 1.0, 2.0]
//!
//! [output]                   # optional
//! histogram_bins = 200
//! # histogram_range = [-2.0, 2.0]
//! # gap_threshold = 0.1
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use nldiff::solver::{DEFAULT_SAFETY, DEFAULT_SNAPSHOT_CAP};
use nldiff::{Domain, KernelSpec, ProblemSpec, RecognitionSpec, TableKernel};

use crate::error::CliError;

pub const DEFAULT_BINS: usize = 200;

/// Default gap threshold for recognition functions without compact support,
/// as a fraction of the initial range.
pub const RANGE_GAP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub recognition: RecognitionConfig,
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingConfig>,
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Uniform,
    Gaussian,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognitionKind {
    QuadCoord,
    QuadAnticoord,
    Linear,
    Bump,
    QuadCoordAdvect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecognitionConfig {
    pub family: RecognitionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Linear,
    Logistic,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steepness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TauSetting {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for TauSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TauSetting::Auto => s.serialize_str("auto"),
            TauSetting::Fixed(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for TauSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct TauVisitor;
        impl Visitor<'_> for TauVisitor {
            type Value = TauSetting;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"auto\" or a positive number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<TauSetting, E> {
                if v == "auto" {
                    Ok(TauSetting::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<TauSetting, E> {
                Ok(TauSetting::Fixed(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<TauSetting, E> {
                Ok(TauSetting::Fixed(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<TauSetting, E> {
                Ok(TauSetting::Fixed(v as f64))
            }
        }
        d.deserialize_any(TauVisitor)
    }
}

impl std::str::FromStr for TauSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(TauSetting::Auto);
        }
        s.parse::<f64>().map(TauSetting::Fixed).map_err(|_| format!("expected \"auto\" or a number, got {s:?}"))
    }
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}

fn default_cap() -> u64 {
    DEFAULT_SNAPSHOT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
    #[serde(default)]
    pub tau: TauSetting,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default = "default_cap")]
    pub snapshot_cap_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    InitialSlope,
    SigmoidParameter,
    SupportRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_threshold: Option<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { histogram_bins: DEFAULT_BINS, histogram_range: None, gap_threshold: None }
    }
}

fn config_err(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn require(value: Option<f64>, field: &str, owner: &str) -> Result<f64, CliError> {
    match value {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(config_err(field, format!("must be finite, got {v}"))),
        None => Err(config_err(field, format!("required for {owner}"))),
    }
}

fn forbid<T>(value: &Option<T>, field: &str, owner: &str) -> Result<(), CliError> {
    match value {
        Some(_) => Err(config_err(field, format!("not used by {owner}"))),
        None => Ok(()),
    }
}

impl Config {
    /// Parses a TOML config, or the `config` object of a manifest when the
    /// path ends in `.json`. Relative table paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_manifest_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if let Some(p) = cfg.kernel.path.as_mut() {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(path_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_manifest_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let config = value.get("config").ok_or_else(|| CliError::Config("manifest has no `config` field".into()))?;
        let cfg: Self = serde_path_to_error::deserialize(config).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("config.{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.domain;
        if d.lower.is_empty() || d.lower.len() != d.upper.len() {
            return Err(config_err("domain", "lower and upper must be nonempty and of equal length"));
        }
        Domain::new(d.lower.clone(), d.upper.clone()).map_err(|e| config_err("domain", e))?;

        let k = &self.kernel;
        match k.family {
            KernelKind::Uniform => {
                forbid(&k.width, "kernel.width", "family uniform")?;
                forbid(&k.path, "kernel.path", "family uniform")?;
            }
            KernelKind::Gaussian => {
                let w = require(k.width, "kernel.width", "family gaussian")?;
                if w <= 0.0 {
                    return Err(config_err("kernel.width", format!("must be positive, got {w}")));
                }
                forbid(&k.path, "kernel.path", "family gaussian")?;
            }
            KernelKind::Table => {
                forbid(&k.width, "kernel.width", "family table")?;
                if k.path.is_none() {
                    return Err(config_err("kernel.path", "required for family table"));
                }
            }
        }
        if let Some(l) = k.lower_bound {
            if !(l.is_finite() && l >= 0.0) {
                return Err(config_err("kernel.lower_bound", format!("must be nonnegative, got {l}")));
            }
        }

        let r = &self.recognition;
        let owner = format!("family {}", recognition_name(r.family));
        match r.family {
            RecognitionKind::QuadCoord | RecognitionKind::QuadAnticoord => {
                forbid(&r.c, "recognition.c", &owner)?;
                forbid(&r.r, "recognition.r", &owner)?;
            }
            RecognitionKind::Linear | RecognitionKind::QuadCoordAdvect => {
                require(r.c, "recognition.c", &owner)?;
                forbid(&r.r, "recognition.r", &owner)?;
            }
            RecognitionKind::Bump => {
                forbid(&r.c, "recognition.c", &owner)?;
                if self.sweep_parameter() != Some(SweepParameter::SupportRadius) {
                    let radius = require(r.r, "recognition.r", &owner)?;
                    if radius <= 0.0 {
                        return Err(config_err("recognition.r", format!("must be positive, got {radius}")));
                    }
                }
            }
        }
        if let Some(s) = r.scale {
            if !s.is_finite() {
                return Err(config_err("recognition.scale", format!("must be finite, got {s}")));
            }
        }

        let i = &self.initial;
        match i.kind {
            InitialKind::Linear => {
                if self.sweep_parameter() != Some(SweepParameter::InitialSlope) {
                    require(i.slope, "initial.slope", "kind linear")?;
                }
                if let Some(b) = i.intercept {
                    require(Some(b), "initial.intercept", "kind linear")?;
                }
                forbid(&i.steepness, "initial.steepness", "kind linear")?;
                forbid(&i.value, "initial.value", "kind linear")?;
            }
            InitialKind::Logistic => {
                if self.sweep_parameter() != Some(SweepParameter::SigmoidParameter) {
                    require(i.steepness, "initial.steepness", "kind logistic")?;
                }
                forbid(&i.slope, "initial.slope", "kind logistic")?;
                forbid(&i.intercept, "initial.intercept", "kind logistic")?;
                forbid(&i.value, "initial.value", "kind logistic")?;
            }
            InitialKind::Constant => {
                require(i.value, "initial.value", "kind constant")?;
                forbid(&i.slope, "initial.slope", "kind constant")?;
                forbid(&i.intercept, "initial.intercept", "kind constant")?;
                forbid(&i.steepness, "initial.steepness", "kind constant")?;
            }
        }

        if let Some(f) = &self.forcing {
            require(Some(f.value), "forcing.value", "forcing")?;
        }

        let s = &self.solver;
        if !(s.horizon.is_finite() && s.horizon >= 0.0) {
            return Err(config_err("solver.T", format!("must be nonnegative, got {}", s.horizon)));
        }
        if !(s.h.is_finite() && s.h > 0.0) {
            return Err(config_err("solver.h", format!("must be positive, got {}", s.h)));
        }
        if let TauSetting::Fixed(t) = s.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(config_err("solver.tau", format!("must be \"auto\" or positive, got {t}")));
            }
        }
        if !(s.safety > 0.0 && s.safety <= 1.0) {
            return Err(config_err("solver.safety", format!("must lie in (0, 1], got {}", s.safety)));
        }
        if let Some(t) = s.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= s.horizon)) {
            return Err(config_err("solver.snapshots", format!("time {t} outside [0, {}]", s.horizon)));
        }

        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(config_err("sweep.values", "must be nonempty"));
            }
            if let Some(v) = sw.values.iter().find(|v| !v.is_finite()) {
                return Err(config_err("sweep.values", format!("must be finite, got {v}")));
            }
            let (ok, needs) = match sw.parameter {
                SweepParameter::InitialSlope => (i.kind == InitialKind::Linear, "initial.kind = \"linear\""),
                SweepParameter::SigmoidParameter => (i.kind == InitialKind::Logistic, "initial.kind = \"logistic\""),
                SweepParameter::SupportRadius => (r.family == RecognitionKind::Bump, "recognition.family = \"bump\""),
            };
            if !ok {
                return Err(config_err("sweep.parameter", format!("requires {needs}")));
            }
            if sw.parameter == SweepParameter::SupportRadius {
                if let Some(v) = sw.values.iter().find(|v| **v <= 0.0) {
                    return Err(config_err("sweep.values", format!("support radius must be positive, got {v}")));
                }
            }
        }

        let o = &self.output;
        if o.histogram_bins < 2 {
            return Err(config_err("output.histogram_bins", "must be at least 2"));
        }
        if let Some([lo, hi]) = o.histogram_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(config_err("output.histogram_range", format!("[{lo}, {hi}] is empty")));
            }
        }
        if let Some(g) = o.gap_threshold {
            if !(g.is_finite() && g > 0.0) {
                return Err(config_err("output.gap_threshold", format!("must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn sweep_parameter(&self) -> Option<SweepParameter> {
        self.sweep.as_ref().map(|s| s.parameter)
    }

    /// Sweep values, or a single `None` point for a plain solve.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        Domain::new(self.domain.lower.clone(), self.domain.upper.clone()).map_err(|e| config_err("domain", e))
    }

    pub fn kernel(&self) -> Result<KernelSpec, CliError> {
        let k = &self.kernel;
        let spec = match k.family {
            KernelKind::Uniform => KernelSpec::uniform(),
            KernelKind::Gaussian => KernelSpec::gaussian(require(k.width, "kernel.width", "family gaussian")?),
            KernelKind::Table => {
                let path = k.path.as_ref().ok_or_else(|| config_err("kernel.path", "required for family table"))?;
                let table = TableKernel::from_csv(path).map_err(|e| match e {
                    nldiff::Error::Io(m) => CliError::Io(m),
                    other => config_err("kernel.path", other),
                })?;
                KernelSpec::table(table)
            }
        };
        Ok(match k.lower_bound {
            Some(l) => spec.with_lower_bound(l),
            None => spec,
        })
    }

    /// Recognition function at a sweep point.
    pub fn recognition(&self, point: Option<f64>) -> Result<RecognitionSpec, CliError> {
        let r = &self.recognition;
        let owner = format!("family {}", recognition_name(r.family));
        let spec = match r.family {
            RecognitionKind::QuadCoord => RecognitionSpec::quad_coord(),
            RecognitionKind::QuadAnticoord => RecognitionSpec::quad_anticoord(),
            RecognitionKind::Linear => RecognitionSpec::linear(require(r.c, "recognition.c", &owner)?),
            RecognitionKind::QuadCoordAdvect => {
                RecognitionSpec::quad_coord_advect(require(r.c, "recognition.c", &owner)?)
            }
            RecognitionKind::Bump => {
                let radius = match (self.sweep_parameter(), point) {
                    (Some(SweepParameter::SupportRadius), Some(v)) => v,
                    _ => require(r.r, "recognition.r", &owner)?,
                };
                RecognitionSpec::bump(radius)
            }
        };
        Ok(match r.scale {
            Some(k) => spec.scaled(k),
            None => spec,
        })
    }

    /// Initial condition at a sweep point, evaluated along the first axis.
    pub fn initial(&self, point: Option<f64>) -> Result<InitialCondition, CliError> {
        let i = &self.initial;
        let swept = |p: SweepParameter| match (self.sweep_parameter(), point) {
            (Some(q), Some(v)) if q == p => Some(v),
            _ => None,
        };
        Ok(match i.kind {
            InitialKind::Linear => InitialCondition::Linear {
                slope: match swept(SweepParameter::InitialSlope) {
                    Some(v) => v,
                    None => require(i.slope, "initial.slope", "kind linear")?,
                },
                intercept: i.intercept.unwrap_or(0.0),
            },
            InitialKind::Logistic => InitialCondition::Logistic {
                steepness: match swept(SweepParameter::SigmoidParameter) {
                    Some(v) => v,
                    None => require(i.steepness, "initial.steepness", "kind logistic")?,
                },
            },
            InitialKind::Constant => InitialCondition::Constant(require(i.value, "initial.value", "kind constant")?),
        })
    }

    /// Solver problem at a sweep point.
    pub fn problem(&self, point: Option<f64>) -> Result<ProblemSpec, CliError> {
        let s = &self.solver;
        let u0 = self.initial(point)?;
        let mut spec = ProblemSpec::new(
            self.domain()?,
            self.kernel()?,
            self.recognition(point)?,
            move |x| u0.eval(x),
            s.horizon,
            s.h,
        )
        .with_snapshots(s.snapshots.clone());
        if let TauSetting::Fixed(t) = s.tau {
            spec = spec.with_tau(t);
        }
        if let Some(f) = &self.forcing {
            let c = f.value;
            spec = spec.with_forcing(move |_, _, _| c);
        }
        spec.safety = s.safety;
        spec.snapshot_cap_bytes = s.snapshot_cap_bytes;
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

fn recognition_name(kind: RecognitionKind) -> &'static str {
    match kind {
        RecognitionKind::QuadCoord => "quad_coord",
        RecognitionKind::QuadAnticoord => "quad_anticoord",
        RecognitionKind::Linear => "linear",
        RecognitionKind::Bump => "bump",
        RecognitionKind::QuadCoordAdvect => "quad_coord_advect",
    }
}

fn path_error(e: serde_path_to_error::Error<toml::de::Error>) -> CliError {
    let path = e.path().to_string();
    let inner = e.into_inner();
    let msg = inner.message().to_string();
    if path == "." {
        CliError::Config(msg)
    } else {
        CliError::Config(format!("{path}: {msg}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Linear { slope: f64, intercept: f64 },
    Logistic { steepness: f64 },
    Constant(f64),
}

impl InitialCondition {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            InitialCondition::Linear { slope, intercept } => slope * x[0] + intercept,
            InitialCondition::Logistic { steepness } => 1.0 / (1.0 + (-steepness * x[0]).exp()),
            InitialCondition::Constant(v) => v,
        }
    }

    pub fn formula(&self) -> String {
        match *self {
            InitialCondition::Linear { .. } => "u0(x) = slope * x0 + intercept".into(),
            InitialCondition::Logistic { .. } => "u0(x) = 1 / (1 + exp(-l * x0))".into(),
            InitialCondition::Constant(_) => "u0(x) = value".into(),
        }
    }
}
