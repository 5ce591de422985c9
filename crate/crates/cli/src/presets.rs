//! Built-in experiment configurations.
//!
//! All presets use a Gaussian kernel of width 0.5 and a bump recognition
//! function, solve to `T = 20` at `h = 1/200` with automatic time steps, and
//! can be re-run from their manifest.

use clap::ValueEnum;
use serde::Serialize;

use crate::config::{
    Config, DomainConfig, InitialConfig, InitialKind, KernelConfig, KernelKind, OutputConfig, RecognitionConfig,
    RecognitionKind, SolverConfig, SweepConfig, SweepParameter, TauSetting, DEFAULT_BINS,
};
use nldiff::solver::{DEFAULT_SAFETY, DEFAULT_SNAPSHOT_CAP};

pub const PRESET_H: f64 = 1.0 / 200.0;
pub const PRESET_T: f64 = 20.0;
pub const PRESET_WIDTH: f64 = 0.5;
pub const PRESET_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `u0 = l x` on [-1/2, 1/2], l in [0, 4] (81 points).
    Exp1,
    /// `u0 = 1 / (1 + exp(-l x))` on [-1/2, 1/2], l in [0, 15] step 0.2.
    Exp2,
    /// `u0 = x` on [-1/2, 1/2], bump radius r in [0.01, 0.8] (81 points).
    Exp3,
    /// `u0 = 7x/2` on [-2, 2], four evenly spaced time slices.
    Propagation,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Exp1 => "exp1",
            Preset::Exp2 => "exp2",
            Preset::Exp3 => "exp3",
            Preset::Propagation => "propagation",
        }
    }

    pub fn config(&self) -> Config {
        match self {
            Preset::Exp1 => base(
                0.5,
                linear(None),
                Some(SweepConfig { parameter: SweepParameter::InitialSlope, values: linspace(0.0, 4.0, 81) }),
                [-2.0, 2.0],
            ),
            Preset::Exp2 => base(
                0.5,
                InitialConfig { kind: InitialKind::Logistic, slope: None, intercept: None, steepness: None, value: None },
                Some(SweepConfig { parameter: SweepParameter::SigmoidParameter, values: linspace(0.0, 15.0, 76) }),
                [0.0, 1.0],
            ),
            Preset::Exp3 => {
                let mut cfg = base(
                    0.5,
                    linear(Some(1.0)),
                    Some(SweepConfig { parameter: SweepParameter::SupportRadius, values: linspace(0.01, 0.8, 81) }),
                    [-0.5, 0.5],
                );
                cfg.recognition.r = None;
                cfg
            }
            Preset::Propagation => {
                let mut cfg = base(2.0, linear(Some(3.5)), None, [-7.0, 7.0]);
                cfg.solver.snapshots = (0..4).map(|k| PRESET_T * k as f64 / 3.0).collect();
                cfg
            }
        }
    }
}

fn linear(slope: Option<f64>) -> InitialConfig {
    InitialConfig { kind: InitialKind::Linear, slope, intercept: None, steepness: None, value: None }
}

fn base(half_width: f64, initial: InitialConfig, sweep: Option<SweepConfig>, range: [f64; 2]) -> Config {
    Config {
        domain: DomainConfig { lower: vec![-half_width], upper: vec![half_width] },
        kernel: KernelConfig { family: KernelKind::Gaussian, width: Some(PRESET_WIDTH), path: None, lower_bound: None },
        recognition: RecognitionConfig {
            family: RecognitionKind::Bump,
            c: None,
            r: Some(PRESET_RADIUS),
            scale: None,
        },
        initial,
        forcing: None,
        solver: SolverConfig {
            horizon: PRESET_T,
            h: PRESET_H,
            tau: TauSetting::Auto,
            safety: DEFAULT_SAFETY,
            snapshots: Vec::new(),
            snapshot_cap_bytes: DEFAULT_SNAPSHOT_CAP,
        },
        sweep,
        output: OutputConfig { histogram_bins: DEFAULT_BINS, histogram_range: Some(range), gap_threshold: None },
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect()
}
