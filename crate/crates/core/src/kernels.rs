//! Interaction kernels `K(x, y)`.
//!
//! Every built-in family is translation invariant, so on a uniform grid the
//! kernel between a closed-grid node and a quadrature node only depends on the
//! integer offset between them. [`KernelRows`] stores one value per realized
//! offset and materializes rows from that table.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Translation-invariant profile `J` sampled at strictly increasing offsets,
/// linearly interpolated and zero outside the sampled range.
///
/// In one dimension the signed difference `x - y` is looked up; in higher
/// dimensions the Euclidean distance `|x - y|` is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableKernel {
    offsets: Vec<f64>,
    values: Vec<f64>,
}

impl TableKernel {
    pub fn new(offsets: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if offsets.len() != values.len() {
            return Err(Error::InvalidKernel("offset and value columns differ in length".into()));
        }
        if offsets.len() < 2 {
            return Err(Error::InvalidKernel("table needs at least two samples".into()));
        }
        if offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKernel("offsets must be strictly increasing".into()));
        }
        if offsets.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("table entries must be finite".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidKernel("table values must be nonnegative".into()));
        }
        Ok(Self { offsets, values })
    }

    /// Reads a headerless (or single-header-line) two-column CSV of `offset,value`.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidKernel(format!("table csv: {e}")))?;
            if record.len() != 2 {
                return Err(Error::InvalidKernel(format!(
                    "table csv line {}: expected 2 columns, got {}",
                    line + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(o), Ok(v)) => {
                    offsets.push(o);
                    values.push(v);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::InvalidKernel(format!(
                        "table csv line {}: non-numeric entry",
                        line + 1
                    )))
                }
            }
        }
        Self::new(offsets, values)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(file)
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_radius(&self) -> f64 {
        self.offsets[0].abs().max(self.offsets[self.offsets.len() - 1].abs())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Largest slope between consecutive samples.
    pub fn lipschitz(&self) -> f64 {
        let inner = self
            .offsets
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(o, v)| (v[1] - v[0]).abs() / (o[1] - o[0]))
            .fold(0.0, f64::max);
        // Jumps to zero at the ends of the table are not Lipschitz; the end
        // values are taken as one-sample slopes.
        let first_gap = self.offsets[1] - self.offsets[0];
        let last_gap = self.offsets[self.offsets.len() - 1] - self.offsets[self.offsets.len() - 2];
        inner
            .max(self.values[0] / first_gap)
            .max(self.values[self.values.len() - 1] / last_gap)
    }

    pub fn eval(&self, d: f64) -> f64 {
        let n = self.offsets.len();
        if d < self.offsets[0] || d > self.offsets[n - 1] {
            return 0.0;
        }
        let k = self.offsets.partition_point(|&o| o <= d);
        if k == n {
            return self.values[n - 1];
        }
        let (o0, o1) = (self.offsets[k - 1], self.offsets[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        let t = (d - o0) / (o1 - o0);
        v0 + t * (v1 - v0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `K = 1 / Vol(domain)`.
    Uniform,
    /// Free-space Gaussian with width `s`; not renormalized on the domain.
    Gaussian { width: f64 },
    TranslationInvariantTable { table: TableKernel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Asserted pointwise lower bound `K >= lambda` on the domain.
    pub lower_bound: Option<f64>,
}

impl KernelSpec {
    pub fn uniform() -> Self {
        Self { family: KernelFamily::Uniform, lower_bound: None }
    }

    pub fn gaussian(width: f64) -> Self {
        Self { family: KernelFamily::Gaussian { width }, lower_bound: None }
    }

    pub fn table(table: TableKernel) -> Self {
        Self { family: KernelFamily::TranslationInvariantTable { table }, lower_bound: None }
    }

    pub fn with_lower_bound(mut self, lambda: f64) -> Self {
        self.lower_bound = Some(lambda);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelFamily::Gaussian { width } = self.family {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::InvalidKernel(format!("gaussian width must be positive, got {width}")));
            }
        }
        if let Some(lambda) = self.lower_bound {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Error::InvalidKernel(format!("lower bound must be nonnegative, got {lambda}")));
            }
        }
        Ok(())
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.family, KernelFamily::Uniform)
    }

    /// Kernel value as a function of the difference `x - y`.
    pub fn eval_offset(&self, domain: &Domain, diff: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Uniform => 1.0 / domain.volume(),
            KernelFamily::Gaussian { width } => {
                let r2: f64 = diff.iter().map(|d| d * d).sum();
                INV_SQRT_2PI / width * (-r2 / (2.0 * width * width)).exp()
            }
            KernelFamily::TranslationInvariantTable { table } => {
                if diff.len() == 1 {
                    table.eval(diff[0])
                } else {
                    table.eval(diff.iter().map(|d| d * d).sum::<f64>().sqrt())
                }
            }
        }
    }

    pub fn eval(&self, domain: &Domain, x: &[f64], y: &[f64]) -> Result<f64> {
        for p in [x, y] {
            if !domain.contains(p) {
                return Err(Error::OutsideDomain { point: p.to_vec() });
            }
        }
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(self.eval_offset(domain, &diff))
    }

    /// Lipschitz constant of `K(x, .)`.
    pub fn lipschitz_constant(&self) -> f64 {
        match &self.family {
            KernelFamily::Uniform => 0.0,
            // max |d/dr| of the Gaussian profile, attained at r = s.
            KernelFamily::Gaussian { width } => {
                INV_SQRT_2PI / (width * width) * (-0.5f64).exp()
            }
            KernelFamily::TranslationInvariantTable { table } => table.lipschitz(),
        }
    }
}

/// Kernel rows over the quadrature nodes, backed by a table of one value per
/// grid offset.
#[derive(Debug, Clone)]
pub struct KernelRows {
    grid: Arc<Grid>,
    table: Vec<f64>,
    anchors: Vec<usize>,
    quad_base: Vec<usize>,
}

impl KernelRows {
    pub fn new(spec: &KernelSpec, grid: Arc<Grid>) -> Result<Self> {
        spec.validate()?;
        let dim = grid.dim();
        let counts = grid.counts();
        let h = grid.h();
        // Offset a - b along an axis ranges over [-(c - 2), c - 1]: a is any
        // node index, b a quadrature index.
        let extents: Vec<usize> = counts.iter().map(|c| 2 * c - 2).collect();
        let mut tstrides = vec![1usize; dim];
        for axis in (0..dim.saturating_sub(1)).rev() {
            tstrides[axis] = tstrides[axis + 1] * extents[axis + 1];
        }
        let size: usize = extents.iter().product();

        let mut table = Vec::with_capacity(size);
        let mut diff = vec![0.0; dim];
        for flat in 0..size {
            let mut rem = flat;
            for axis in 0..dim {
                let k = rem / tstrides[axis];
                rem %= tstrides[axis];
                diff[axis] = (k as f64 - (counts[axis] as f64 - 2.0)) * h;
            }
            table.push(spec.eval_offset(grid.domain(), &diff));
        }

        let anchors = (0..grid.len())
            .map(|node| {
                grid.multi_index(node)
                    .iter()
                    .zip(counts)
                    .zip(&tstrides)
                    .map(|((a, c), s)| (a + c - 2) * s)
                    .sum()
            })
            .collect();
        let quad_base = grid
            .quad_indices()
            .iter()
            .map(|&j| grid.multi_index(j).iter().zip(&tstrides).map(|(b, s)| b * s).sum())
            .collect();

        Ok(Self { grid, table, anchors, quad_base })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Kernel values `K(node, y)` for every quadrature node `y`, written into `out`.
    pub fn fill_row(&self, node: usize, out: &mut [f64]) {
        let anchor = self.anchors[node];
        for (o, base) in out.iter_mut().zip(&self.quad_base) {
            *o = self.table[anchor - base];
        }
    }

    pub fn row(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.quad_base.len()];
        self.fill_row(node, &mut out);
        out
    }

    #[inline]
    pub(crate) fn entry(&self, node: usize, quad: usize) -> f64 {
        self.table[self.anchors[node] - self.quad_base[quad]]
    }

    /// `sum_y K(node, y) h^n`.
    pub fn discrete_l1(&self, node: usize) -> f64 {
        let anchor = self.anchors[node];
        self.quad_base.iter().map(|b| self.table[anchor - b]).sum::<f64>() * self.grid.weight()
    }

    /// Largest `discrete_l1` over all nodes.
    pub fn max_discrete_l1(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.discrete_l1(i)).fold(0.0, f64::max)
    }

    /// `max_{x, y} K(x, y)` over closed nodes `x` and quadrature nodes `y`.
    pub fn sup_row_bound(&self) -> f64 {
        self.table.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest kernel value over all node pairs.
    pub fn min_value(&self) -> f64 {
        self.table.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn locate(grid: &Grid, x: &[f64]) -> Result<usize> {
    let node = grid
        .nearest_node(x)
        .ok_or_else(|| Error::OutsideDomain { point: x.to_vec() })?;
    let tol = 1e-9 * grid.h();
    if grid.node(node).iter().zip(x).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::InvalidKernel(format!("{x:?} is not a grid node")));
    }
    Ok(node)
}

/// `K(x, y)` for every quadrature node `y`; `x` must be a grid node.
pub fn kernel_row(spec: &KernelSpec, grid: &Arc<Grid>, x: &[f64]) -> Result<Vec<f64>> {
    let node = locate(grid, x)?;
    Ok(KernelRows::new(spec, grid.clone())?.row(node))
}

/// Discrete `L^1` norm of `K(x, .)` over the quadrature nodes.
pub fn discrete_l1(spec: &KernelSpec, grid: &Arc<Grid>, x: &[f64]) -> Result<f64> {
    let node = locate(grid, x)?;
    Ok(KernelRows::new(spec, grid.clone())?.discrete_l1(node))
}

pub fn sup_row_bound(spec: &KernelSpec, grid: &Arc<Grid>) -> Result<f64> {
    Ok(KernelRows::new(spec, grid.clone())?.sup_row_bound())
}

/// Checks the asserted lower bound against every node pair. `Ok(true)` when
/// no bound is set.
pub fn check_lower_bound(spec: &KernelSpec, grid: &Arc<Grid>) -> Result<bool> {
    match spec.lower_bound {
        None => Ok(true),
        Some(lambda) => Ok(KernelRows::new(spec, grid.clone())?.min_value() >= lambda),
    }
}
