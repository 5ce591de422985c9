//! The discrete nonlocality
//!
//! ```text
//! G[w](x) = sum_{y in quad nodes} K(x, y) rho'(w(x) - w(y)) h^n
//! ```
//!
//! together with the discrete payoff and the stationary / Nash residuals.
//! The self term `y = x` is kept whenever `x` is a quadrature node.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{Grid, GridFunction};
use crate::kernels::{KernelRows, KernelSpec};
use crate::recognition::{bump_prime, RecognitionFamily, RecognitionSpec};

/// Points in the default deviation grid of [`NonlocalContext::nash_residual`].
pub const DEFAULT_SHIFT_POINTS: usize = 81;

#[derive(Debug, Clone)]
pub struct NonlocalContext {
    grid: Arc<Grid>,
    kernel: KernelSpec,
    rows: KernelRows,
    recognition: RecognitionSpec,
    exec: Execution,
}

impl NonlocalContext {
    pub fn new(grid: Arc<Grid>, kernel: KernelSpec, recognition: RecognitionSpec) -> Result<Self> {
        recognition.validate()?;
        let rows = KernelRows::new(&kernel, grid.clone())?;
        Ok(Self { grid, kernel, rows, recognition, exec: Execution::default() })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn rows(&self) -> &KernelRows {
        &self.rows
    }

    pub fn recognition(&self) -> &RecognitionSpec {
        &self.recognition
    }

    fn check(&self, w: &GridFunction) -> Result<()> {
        if !Arc::ptr_eq(w.grid(), &self.grid) && **w.grid() != *self.grid {
            return Err(Error::GridMismatch { expected: self.grid.len(), got: w.grid().len() });
        }
        Ok(())
    }

    /// `G[w]` as a grid function at `w`'s time.
    pub fn apply(&self, w: &GridFunction) -> Result<GridFunction> {
        self.check(w)?;
        let mut out = vec![0.0; self.grid.len()];
        self.apply_values(w.values(), &mut out);
        GridFunction::new(self.grid.clone(), out, w.time())
    }

    /// `G[values]` written into `out`. Both slices are indexed by grid node.
    pub fn apply_values(&self, values: &[f64], out: &mut [f64]) {
        assert_eq!(values.len(), self.grid.len());
        assert_eq!(out.len(), self.grid.len());
        let k = self.recognition.scale;
        match self.recognition.family {
            RecognitionFamily::QuadCoord => self.accumulate(values, out, |z| -k * z),
            RecognitionFamily::QuadAnticoord => self.accumulate(values, out, |z| k * z),
            RecognitionFamily::Linear { c } => self.accumulate(values, out, |_| k * c),
            RecognitionFamily::QuadCoordAdvect { c } => self.accumulate(values, out, |z| k * (c - z)),
            RecognitionFamily::Bump { r } => self.accumulate_windowed(values, out, r, |z| k * bump_prime(z, r)),
        }
    }

    /// Same sum for `rho'` vanishing outside `(-r, r)`: quadrature nodes are
    /// sorted by value and each row only visits the values within `r`.
    fn accumulate_windowed<F>(&self, values: &[f64], out: &mut [f64], r: f64, rho_prime: F)
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let mut sorted: Vec<(f64, usize)> =
            self.grid.quad_indices().iter().enumerate().map(|(j, &node)| (values[node], j)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let weight = self.grid.weight();
        let rows = &self.rows;
        let sorted = &sorted;
        self.exec.fill(out, |i| {
            let wx = values[i];
            let start = sorted.partition_point(|&(v, _)| v <= wx - r);
            let mut sum = 0.0;
            for &(wy, j) in sorted[start..].iter().take_while(|&&(v, _)| v < wx + r) {
                sum += rows.entry(i, j) * rho_prime(wx - wy);
            }
            sum * weight
        });
    }

    #[inline(always)]
    fn accumulate<F>(&self, values: &[f64], out: &mut [f64], rho_prime: F)
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let quad_values: Vec<f64> = self.grid.quad_indices().iter().map(|&j| values[j]).collect();
        let weight = self.grid.weight();
        let rows = &self.rows;
        self.exec.fill(out, |i| {
            let wx = values[i];
            let mut sum = 0.0;
            for (j, &wy) in quad_values.iter().enumerate() {
                sum += rows.entry(i, j) * rho_prime(wx - wy);
            }
            sum * weight
        });
    }

    /// Discrete payoff `sum_y K(x, y) rho(w(x) - w(y)) h^n` at `node`.
    pub fn payoff(&self, w: &GridFunction, node: usize) -> Result<f64> {
        self.check(w)?;
        if node >= self.grid.len() {
            return Err(Error::GridMismatch { expected: self.grid.len(), got: node });
        }
        Ok(self.payoff_with(w.values(), node, w.values()[node]))
    }

    /// Payoff at `node` when that node alone plays `strategy`.
    fn payoff_with(&self, values: &[f64], node: usize, strategy: f64) -> f64 {
        let rho = &self.recognition;
        let sum: f64 = self
            .grid
            .quad_indices()
            .iter()
            .enumerate()
            .map(|(j, &y)| {
                let other = if y == node { strategy } else { values[y] };
                self.rows.entry(node, j) * rho.rho(strategy - other)
            })
            .sum();
        sum * self.grid.weight()
    }

    /// `max_x |G[w](x)|`; zero exactly for a stationary profile.
    pub fn stationary_residual(&self, w: &GridFunction) -> Result<f64> {
        let g = self.apply(w)?;
        Ok(g.sup_norm())
    }

    /// `min_{x, s} payoff(x | w) - payoff(x | w with w(x) + s)` over the shift
    /// grid. Never positive; a negative value is a profitable unilateral
    /// deviation.
    pub fn nash_residual(&self, w: &GridFunction, shifts: &[f64]) -> Result<f64> {
        self.check(w)?;
        let values = w.values();
        let mut per_node = vec![0.0; self.grid.len()];
        self.exec.fill(&mut per_node, |x| {
            let base = self.payoff_with(values, x, values[x]);
            shifts
                .iter()
                .map(|s| base - self.payoff_with(values, x, values[x] + s))
                .fold(0.0, f64::min)
        });
        Ok(per_node.into_iter().fold(0.0, f64::min))
    }

    /// Uniform shifts on `[-2R, 2R]` with `R = |w|_inf`.
    pub fn default_shift_grid(w: &GridFunction) -> Vec<f64> {
        let r = w.sup_norm();
        if r == 0.0 {
            return vec![0.0];
        }
        let n = DEFAULT_SHIFT_POINTS;
        (0..n).map(|k| -2.0 * r + 4.0 * r * k as f64 / (n - 1) as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, Domain};
    use crate::kernels::TableKernel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, h: f64) -> Arc<Grid> {
        Arc::new(Grid::build(Domain::interval(lo, hi).unwrap(), h).unwrap())
    }

    /// Literal double loop over node coordinates, no kernel table.
    fn brute_force(ctx: &NonlocalContext, w: &GridFunction) -> Vec<f64> {
        let g = ctx.grid();
        (0..g.len())
            .map(|i| {
                g.quad_indices()
                    .iter()
                    .map(|&j| {
                        let k = ctx.kernel().eval(g.domain(), g.node(i), g.node(j)).unwrap();
                        k * ctx.recognition().rho_prime(w.values()[i] - w.values()[j]) * g.weight()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn hand_quadrature_linear_profile() {
        let g = grid(0.0, 1.0, 0.25);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::uniform(), RecognitionSpec::quad_coord()).unwrap();
        let w = sample(&g, |x| x[0]).unwrap();
        let out = ctx.apply(&w).unwrap();
        for (x, v) in g.nodes().zip(out.values()) {
            assert_relative_eq!(*v, 0.375 - x[0], epsilon = 1e-15);
        }
        assert_relative_eq!(out.values()[2], -0.125, epsilon = 1e-15);
    }

    #[test]
    fn constant_profiles_are_stationary_under_coordination() {
        let g = grid(-0.5, 0.5, 0.05);
        for rho in [RecognitionSpec::quad_coord(), RecognitionSpec::bump(0.2)] {
            let ctx = NonlocalContext::new(g.clone(), KernelSpec::gaussian(0.5), rho).unwrap();
            let w = sample(&g, |_| 1.7).unwrap();
            assert!(ctx.apply(&w).unwrap().values().iter().all(|&v| v == 0.0));
            assert_eq!(ctx.stationary_residual(&w).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_rho_gives_constant_drift() {
        let g = grid(0.0, 1.0, 0.1);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::uniform(), RecognitionSpec::linear(2.0)).unwrap();
        let w = sample(&g, |x| (7.0 * x[0]).sin()).unwrap();
        for v in ctx.apply(&w).unwrap().values() {
            assert_relative_eq!(*v, 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn matches_brute_force() {
        let g = grid(-0.5, 0.5, 0.02);
        let w = sample(&g, |x| 1.3 * x[0] + 0.1 * (9.0 * x[0]).sin()).unwrap();
        for (kernel, rho) in [
            (KernelSpec::gaussian(0.5), RecognitionSpec::bump(0.2)),
            (KernelSpec::uniform(), RecognitionSpec::quad_coord_advect(0.3)),
            (KernelSpec::gaussian(0.1), RecognitionSpec::quad_anticoord()),
        ] {
            let ctx = NonlocalContext::new(g.clone(), kernel, rho).unwrap();
            let fast = ctx.apply(&w).unwrap();
            for (a, b) in fast.values().iter().zip(brute_force(&ctx, &w)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let g = grid(-0.5, 0.5, 0.005);
        let w = sample(&g, |x| 3.0 * x[0]).unwrap();
        let ctx = NonlocalContext::new(g, KernelSpec::gaussian(0.5), RecognitionSpec::bump(0.2)).unwrap();
        let a = ctx.clone().with_execution(Execution::Serial).apply(&w).unwrap();
        let b = ctx.with_execution(Execution::Parallel).apply(&w).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn payoff_values() {
        let g = grid(0.0, 1.0, 0.01);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::uniform(), RecognitionSpec::bump(0.2)).unwrap();
        let w = sample(&g, |_| 0.4).unwrap();
        assert_relative_eq!(ctx.payoff(&w, 17).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);

        let zero = NonlocalContext::new(g.clone(), KernelSpec::uniform(), RecognitionSpec::bump(0.2).scaled(0.0)).unwrap();
        let w = sample(&g, |x| x[0]).unwrap();
        assert!((0..g.len()).all(|i| zero.payoff(&w, i).unwrap() == 0.0));

        // Continuum payoff at x = 1/2 for w(y) = y: -(1/2) int_0^1 (1/2 - y)^2 dy = -1/24.
        let g = grid(0.0, 1.0, 1.0 / 200.0);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::uniform(), RecognitionSpec::quad_coord()).unwrap();
        let w = sample(&g, |x| x[0]).unwrap();
        let mid = g.nearest_node(&[0.5]).unwrap();
        let p = ctx.payoff(&w, mid).unwrap();
        assert!((p + 1.0 / 24.0).abs() / (1.0 / 24.0) < 0.05, "{p}");
    }

    #[test]
    fn banded_profile_is_stationary() {
        let r = 0.2;
        let g = grid(0.0, 1.0, 0.01);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::gaussian(0.5), RecognitionSpec::bump(r)).unwrap();
        let w = sample(&g, |x| if x[0] < 0.3 { 0.0 } else if x[0] < 0.7 { r } else { 2.0 * r }).unwrap();
        assert_eq!(ctx.stationary_residual(&w).unwrap(), 0.0);
    }

    #[test]
    fn odd_profile_cancels_under_even_table_kernel() {
        let delta = 0.5;
        let table = TableKernel::new(vec![-delta, 0.0, delta], vec![0.0, 2.0, 0.0]).unwrap();
        let g = grid(-2.0, 2.0, 0.05);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::table(table), RecognitionSpec::quad_coord()).unwrap();
        let w = sample(&g, |x| x[0]).unwrap();
        let out = ctx.apply(&w).unwrap();
        let mut checked = 0;
        for (x, v) in g.nodes().zip(out.values()) {
            if x[0] - delta >= -2.0 && x[0] + delta < 2.0 - 1e-12 {
                assert!(v.abs() <= 1e-10, "x = {}: {v}", x[0]);
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn nash_residuals() {
        let g = grid(-0.5, 0.5, 0.02);
        let rho = RecognitionSpec::bump(0.2);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::gaussian(0.5), rho).unwrap();

        let flat = sample(&g, |_| 0.1).unwrap();
        assert_eq!(ctx.nash_residual(&flat, &[-0.3, 0.0, 0.3]).unwrap(), 0.0);
        assert_eq!(ctx.nash_residual(&flat, &[0.0]).unwrap(), 0.0);

        // A single node at 2a above an otherwise flat profile.
        let spike = g.nearest_node(&[0.1]).unwrap();
        let mut values = vec![0.0; g.len()];
        values[spike] = 0.4;
        let w = GridFunction::new(g.clone(), values, 0.0).unwrap();
        assert_eq!(ctx.stationary_residual(&w).unwrap(), 0.0);
        let l1 = ctx.rows().discrete_l1(spike);
        let self_term = ctx.rows().sup_row_bound() * g.weight() * rho.rho(0.0);
        let expected = -(rho.rho(0.0) * l1 - self_term);
        let residual = ctx.nash_residual(&w, &[-0.4, 0.0]).unwrap();
        assert_relative_eq!(residual, expected, max_relative = 1e-12);
        assert!(ctx.nash_residual(&w, &NonlocalContext::default_shift_grid(&w)).unwrap() < 0.0);
        assert_eq!(ctx.nash_residual(&w, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn shift_grid_shape() {
        let g = grid(0.0, 1.0, 0.25);
        let w = sample(&g, |x| x[0]).unwrap();
        let s = NonlocalContext::default_shift_grid(&w);
        assert_eq!(s.len(), 81);
        assert_eq!(s[0], -2.0);
        assert_eq!(s[40], 0.0);
        assert_eq!(s[80], 2.0);
    }

    #[test]
    fn rejects_foreign_grid() {
        let ctx = NonlocalContext::new(grid(0.0, 1.0, 0.25), KernelSpec::uniform(), RecognitionSpec::quad_coord()).unwrap();
        let other = grid(0.0, 1.0, 0.5);
        let w = sample(&other, |x| x[0]).unwrap();
        assert!(matches!(ctx.apply(&w), Err(Error::GridMismatch { .. })));
    }

    /// Uniform kernel and quad_coord: continuum g[u] = mean(u) - u.
    fn quadrature_error(h: f64) -> f64 {
        let g = grid(0.0, 1.0, h);
        let ctx = NonlocalContext::new(g.clone(), KernelSpec::uniform(), RecognitionSpec::quad_coord()).unwrap();
        let u = |x: f64| (3.0 * x).sin();
        let mean = (1.0 - 3.0f64.cos()) / 3.0;
        let w = sample(&g, |x| u(x[0])).unwrap();
        let out = ctx.apply(&w).unwrap();
        g.nodes().zip(out.values()).map(|(x, v)| (v - (mean - u(x[0]))).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn quadrature_is_first_order() {
        let hs = [1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0];
        let errs: Vec<f64> = hs.iter().map(|&h| quadrature_error(h)).collect();
        let order = (errs[0] / errs[2]).ln() / (hs[0] / hs[2]).ln();
        assert!(order >= 0.8, "order {order}, errors {errs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn vertical_shift_invariance(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 4),
            c in -5.0f64..5.0,
            bump in proptest::bool::ANY,
        ) {
            let g = grid(-0.5, 0.5, 0.02);
            let rho = if bump { RecognitionSpec::bump(0.2) } else { RecognitionSpec::quad_coord() };
            let ctx = NonlocalContext::new(g.clone(), KernelSpec::gaussian(0.5), rho).unwrap();
            let f = |x: f64| coeffs.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * 3.0 * x).sin()).sum::<f64>();
            let w = sample(&g, |x| f(x[0])).unwrap();
            let shifted = w.map(|v| v + c).unwrap();
            let a = ctx.apply(&w).unwrap();
            let b = ctx.apply(&shifted).unwrap();
            let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(diff <= 1e-12, "diff {diff}");
        }

        #[test]
        fn discrete_lipschitz_bound(
            a in proptest::collection::vec(-1.0f64..1.0, 51),
            b in proptest::collection::vec(-1.0f64..1.0, 51),
        ) {
            let g = grid(-0.5, 0.5, 0.02);
            let rho = RecognitionSpec::bump(0.2);
            let ctx = NonlocalContext::new(g.clone(), KernelSpec::gaussian(0.5), rho).unwrap();
            let w1 = GridFunction::new(g.clone(), a, 0.0).unwrap();
            let w2 = GridFunction::new(g.clone(), b, 0.0).unwrap();
            let radius = w1.sup_norm().max(w2.sup_norm());
            let l_rho = rho.lipschitz_bound(-2.0 * radius, 2.0 * radius);
            let bound_const = 2.0 * l_rho * ctx.rows().sup_row_bound() * g.domain().volume();
            let g1 = ctx.apply(&w1).unwrap();
            let g2 = ctx.apply(&w2).unwrap();
            let lhs = g1.values().iter().zip(g2.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let dist = w1.values().iter().zip(w2.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(lhs <= bound_const * dist + 1e-12);
        }
    }
}
