//! Recognition functions `rho` (pairwise payoff as a function of the strategy
//! difference) and the constants the solver needs from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples used by the sampled Lipschitz and sup bounds.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Inflation applied to sampled Lipschitz bounds.
pub const SAMPLED_INFLATION: f64 = 1.05;

/// Bump exponents below this underflow to zero.
const EXPONENT_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecognitionFamily {
    /// `-z^2 / 2`
    QuadCoord,
    /// `z^2 / 2`
    QuadAnticoord,
    /// `c z`
    Linear { c: f64 },
    /// `exp(-1 / (1 - (z/r)^2))` for `|z| < r`, zero otherwise.
    Bump { r: f64 },
    /// `-z^2 / 2 + c z`
    QuadCoordAdvect { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecognitionSpec {
    #[serde(flatten)]
    pub family: RecognitionFamily,
    /// Multiplies `rho` (and so every derivative and bound).
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[inline]
pub(crate) fn bump(z: f64, r: f64) -> f64 {
    if z.abs() >= r {
        return 0.0;
    }
    let s = z / r;
    let exponent = -1.0 / (1.0 - s * s);
    if exponent < EXPONENT_FLOOR {
        0.0
    } else {
        exponent.exp()
    }
}

#[inline]
pub(crate) fn bump_prime(z: f64, r: f64) -> f64 {
    if z.abs() >= r {
        return 0.0;
    }
    let s = z / r;
    let q = 1.0 - s * s;
    let exponent = -1.0 / q;
    if exponent < EXPONENT_FLOOR {
        0.0
    } else {
        -(2.0 * z / (r * r)) / (q * q) * exponent.exp()
    }
}

impl RecognitionSpec {
    pub fn new(family: RecognitionFamily) -> Self {
        Self { family, scale: 1.0 }
    }

    pub fn quad_coord() -> Self {
        Self::new(RecognitionFamily::QuadCoord)
    }

    pub fn quad_anticoord() -> Self {
        Self::new(RecognitionFamily::QuadAnticoord)
    }

    pub fn linear(c: f64) -> Self {
        Self::new(RecognitionFamily::Linear { c })
    }

    pub fn bump(r: f64) -> Self {
        Self::new(RecognitionFamily::Bump { r })
    }

    pub fn quad_coord_advect(c: f64) -> Self {
        Self::new(RecognitionFamily::QuadCoordAdvect { c })
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.scale *= k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() {
            return Err(Error::InvalidRecognition(format!("scale must be finite, got {}", self.scale)));
        }
        match self.family {
            RecognitionFamily::Bump { r } if !(r.is_finite() && r > 0.0) => {
                return Err(Error::InvalidRecognition(format!("bump radius must be positive, got {r}")))
            }
            RecognitionFamily::Linear { c } | RecognitionFamily::QuadCoordAdvect { c }
                if !c.is_finite() =>
            {
                return Err(Error::InvalidRecognition(format!("c must be finite, got {c}")))
            }
            _ => {}
        }
        let (c, a) = self.growth_constants();
        let violated = (-1000..=1000)
            .map(|k| k as f64 * 0.1)
            .any(|z| self.rho(z) > c * z * z + a + 1e-9);
        if violated {
            return Err(Error::InvalidRecognition("rho grows faster than quadratically".into()));
        }
        Ok(())
    }

    /// `(C, A)` with `rho(z) <= C z^2 + A` for all `z`.
    pub fn growth_constants(&self) -> (f64, f64) {
        let k = self.scale.abs();
        match self.family {
            RecognitionFamily::QuadCoord | RecognitionFamily::QuadAnticoord => (0.5 * k, 0.0),
            RecognitionFamily::Linear { c } => (k, 0.25 * c * c * k),
            RecognitionFamily::Bump { .. } => (0.0, k),
            RecognitionFamily::QuadCoordAdvect { c } => (0.5 * k, c * c * k),
        }
    }

    pub fn rho(&self, z: f64) -> f64 {
        let raw = match self.family {
            RecognitionFamily::QuadCoord => -0.5 * z * z,
            RecognitionFamily::QuadAnticoord => 0.5 * z * z,
            RecognitionFamily::Linear { c } => c * z,
            RecognitionFamily::Bump { r } => bump(z, r),
            RecognitionFamily::QuadCoordAdvect { c } => -0.5 * z * z + c * z,
        };
        self.scale * raw
    }

    pub fn rho_prime(&self, z: f64) -> f64 {
        let raw = match self.family {
            RecognitionFamily::QuadCoord => -z,
            RecognitionFamily::QuadAnticoord => z,
            RecognitionFamily::Linear { c } => c,
            RecognitionFamily::Bump { r } => bump_prime(z, r),
            RecognitionFamily::QuadCoordAdvect { c } => c - z,
        };
        self.scale * raw
    }

    /// Radius of the support of `rho'` (infinite unless compactly supported).
    pub fn support_radius(&self) -> f64 {
        match self.family {
            RecognitionFamily::Bump { r } => r,
            _ => f64::INFINITY,
        }
    }

    /// Upper bound on the Lipschitz constant of `rho'` over `[lo, hi]`.
    pub fn lipschitz_bound(&self, lo: f64, hi: f64) -> f64 {
        self.lipschitz_bound_sampled(lo, hi, DEFAULT_SAMPLES)
    }

    /// As [`Self::lipschitz_bound`], with an explicit sample count for the
    /// sampled families.
    pub fn lipschitz_bound_sampled(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        let k = self.scale.abs();
        match self.family {
            RecognitionFamily::QuadCoord
            | RecognitionFamily::QuadAnticoord
            | RecognitionFamily::QuadCoordAdvect { .. } => k,
            RecognitionFamily::Linear { .. } => 0.0,
            RecognitionFamily::Bump { r } => {
                let step = 1e-6 * r;
                let second = |z: f64| (bump_prime(z + step, r) - bump_prime(z - step, r)) / (2.0 * step);
                k * SAMPLED_INFLATION * sampled_max(lo.max(-r), hi.min(r), samples, second)
            }
        }
    }

    /// Upper bound on `|rho'|` over `[lo, hi]`.
    pub fn sup_bound(&self, lo: f64, hi: f64) -> f64 {
        let k = self.scale.abs();
        match self.family {
            RecognitionFamily::QuadCoord | RecognitionFamily::QuadAnticoord => k * lo.abs().max(hi.abs()),
            RecognitionFamily::Linear { c } => k * c.abs(),
            RecognitionFamily::QuadCoordAdvect { c } => k * (c - lo).abs().max((c - hi).abs()),
            RecognitionFamily::Bump { r } => {
                k * sampled_max(lo.max(-r), hi.min(r), DEFAULT_SAMPLES, |z| bump_prime(z, r))
            }
        }
    }

    /// Coordination condition: `rho'(0) = 0`, `rho' <= 0` right of zero and
    /// `rho' >= 0` left of it.
    pub fn is_coordination(&self) -> bool {
        if self.scale == 0.0 {
            return true;
        }
        let positive = self.scale > 0.0;
        match self.family {
            RecognitionFamily::QuadCoord | RecognitionFamily::Bump { .. } => positive,
            RecognitionFamily::QuadAnticoord => !positive,
            RecognitionFamily::Linear { c } => c == 0.0,
            RecognitionFamily::QuadCoordAdvect { c } => c == 0.0 && positive,
        }
    }
}

/// `max |f|` over `samples` uniformly spaced points of `[lo, hi]` (zero for an
/// empty interval).
fn sampled_max(lo: f64, hi: f64, samples: usize, f: impl Fn(f64) -> f64) -> f64 {
    if lo > hi {
        return 0.0;
    }
    if lo == hi || samples < 2 {
        return f(lo).abs();
    }
    let dz = (hi - lo) / (samples - 1) as f64;
    (0..samples).map(|i| f(lo + i as f64 * dz).abs()).fold(0.0, f64::max)
}
