//! Domain geometry, uniform grids and grid functions.
//!
//! A [`Grid`] carries two node sets over a box domain: the closed grid (both
//! faces on every axis) on which solutions live, and the half-open quadrature
//! grid (upper face dropped on every axis) over which the nonlocal sum runs.
//! Nodes are ordered lexicographically by axis index, axis 0 slowest.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether `h` divides an axis length.
pub const DIVISOR_TOLERANCE: f64 = 1e-9;

/// Search limit for snapping `h` down to an exact divisor of every axis.
const MAX_SNAP_STEPS: usize = 1_000_000;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "lower has {} entries but upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidDomain(format!(
                    "axis {axis}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Membership test with a small relative slack on each face.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&lo, &hi))| {
                let slack = 1e-9 * (hi - lo);
                v >= lo - slack && v <= hi + slack
            })
    }
}

/// Uniform tensor-product grid over a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    h: f64,
    requested_h: f64,
    counts: Vec<usize>,
    strides: Vec<usize>,
    coords: Vec<f64>,
    quad: Vec<usize>,
    weight: f64,
}

impl Grid {
    pub fn build(domain: Domain, h: f64) -> Result<Self> {
        let requested_h = h;
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::InvalidSpacing { h, reason: "must be positive and finite".into() });
        }
        let lengths = domain.lengths();
        if let Some(len) = lengths.iter().find(|&&len| h > len * (1.0 + DIVISOR_TOLERANCE)) {
            return Err(Error::InvalidSpacing {
                h,
                reason: format!("exceeds axis length {len}"),
            });
        }

        let cells = snap_cells(&lengths, h)?;
        let h = lengths[0] / cells[0] as f64;
        let dim = domain.dim();
        let counts: Vec<usize> = cells.iter().map(|c| c + 1).collect();

        let mut strides = vec![1usize; dim];
        for axis in (0..dim.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * counts[axis + 1];
        }
        let total: usize = counts.iter().product();

        let mut coords = Vec::with_capacity(total * dim);
        let mut quad = Vec::new();
        let mut index = vec![0usize; dim];
        for node in 0..total {
            let mut rem = node;
            for axis in 0..dim {
                index[axis] = rem / strides[axis];
                rem %= strides[axis];
            }
            for axis in 0..dim {
                let k = index[axis];
                let x = if k == cells[axis] {
                    domain.upper[axis]
                } else {
                    domain.lower[axis] + k as f64 * h
                };
                coords.push(x);
            }
            if index.iter().zip(&cells).all(|(k, c)| k < c) {
                quad.push(node);
            }
        }

        Ok(Self {
            domain,
            h,
            requested_h,
            counts,
            strides,
            coords,
            quad,
            weight: h.powi(dim as i32),
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Spacing actually used (after snapping).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn requested_h(&self) -> f64 {
        self.requested_h
    }

    /// True when the requested spacing did not divide the domain and was snapped down.
    pub fn was_snapped(&self) -> bool {
        let rel = (self.h - self.requested_h).abs() / self.requested_h;
        rel > DIVISOR_TOLERANCE
    }

    /// Node count per axis.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    /// Indices (into the closed node list) of the half-open quadrature nodes.
    pub fn quad_indices(&self) -> &[usize] {
        &self.quad
    }

    pub fn quad_nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.quad.iter().map(move |&i| self.node(i))
    }

    /// Quadrature weight `h^n`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rem = node;
        self.strides
            .iter()
            .map(|s| {
                let k = rem / s;
                rem %= s;
                k
            })
            .collect()
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let mut node = 0;
        for axis in 0..self.dim() {
            let k = ((x[axis] - self.domain.lower[axis]) / self.h).round();
            let k = (k.max(0.0) as usize).min(self.counts[axis] - 1);
            node += k * self.strides[axis];
        }
        Some(node)
    }
}

/// Cell counts per axis for spacing `h`, snapping `h` down when it does not
/// divide every axis length.
fn snap_cells(lengths: &[f64], h: f64) -> Result<Vec<usize>> {
    let divides = |h: f64| -> Option<Vec<usize>> {
        lengths
            .iter()
            .map(|len| {
                let ratio = len / h;
                let n = ratio.round();
                ((ratio - n).abs() <= DIVISOR_TOLERANCE * ratio && n >= 1.0).then_some(n as usize)
            })
            .collect()
    };
    if let Some(cells) = divides(h) {
        return Ok(cells);
    }
    let first = (lengths[0] / h).ceil() as usize;
    (first..first + MAX_SNAP_STEPS)
        .find_map(|k| divides(lengths[0] / k as f64))
        .ok_or_else(|| Error::InvalidSpacing {
            h,
            reason: "no common divisor of the axis lengths below h".into(),
        })
}

/// Values sampled on every node of a grid, at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    time: f64,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], time: 0.0 }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// Pointwise map, keeping grid and time.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect(), self.time)
    }
}

pub(crate) fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Projection of a scalar field onto the grid nodes at time 0.
pub fn sample(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<GridFunction> {
    let values = grid.nodes().map(&f).collect();
    GridFunction::new(grid.clone(), values, 0.0)
}
