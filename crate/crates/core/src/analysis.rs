//! Post-processing of profiles: band detection, band-count bounds, density
//! histograms and the discrete Lipschitz modulus.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Relative slack used when comparing band counts and separations against
/// bounds that are attained with equality.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSummary {
    pub band_centers: Vec<f64>,
    pub band_masses: Vec<f64>,
    pub separations: Vec<f64>,
    pub gap_threshold: f64,
}

impl BandSummary {
    pub fn count(&self) -> usize {
        self.band_centers.len()
    }

    pub fn min_separation(&self) -> Option<f64> {
        self.separations.iter().copied().reduce(f64::min)
    }
}

/// Clusters `values` into bands, splitting wherever two consecutive sorted
/// values are more than `gap_threshold` apart.
pub fn detect_bands(values: &[f64], gap_threshold: f64) -> Result<BandSummary> {
    if values.is_empty() {
        return Err(Error::InvalidProblem("no values to cluster".into()));
    }
    if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { node, value });
    }
    if !(gap_threshold > 0.0) {
        return Err(Error::InvalidProblem(format!("gap threshold must be positive, got {gap_threshold}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let total = sorted.len() as f64;
    let mut band_centers = Vec::new();
    let mut band_masses = Vec::new();
    let mut start = 0;
    for end in 1..=sorted.len() {
        if end == sorted.len() || sorted[end] - sorted[end - 1] > gap_threshold {
            let cluster = &sorted[start..end];
            let first = cluster[0];
            band_centers.push(first + cluster.iter().map(|v| v - first).sum::<f64>() / cluster.len() as f64);
            band_masses.push(cluster.len() as f64 / total);
            start = end;
        }
    }
    let separations = band_centers.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(BandSummary { band_centers, band_masses, separations, gap_threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandBoundReport {
    pub bands: usize,
    /// `floor(R / r) + 1`
    pub theorem_limit: usize,
    /// `R / (2 r) + 1`
    pub empirical_limit: f64,
    pub theorem_bound_ok: bool,
    pub empirical_bound_ok: bool,
    pub min_separation: Option<f64>,
    pub min_separation_ok: bool,
}

/// Checks a band summary against the band-count bounds for range `range` and
/// support radius `radius`.
pub fn check_band_bounds(summary: &BandSummary, range: f64, radius: f64) -> BandBoundReport {
    let bands = summary.count();
    let theorem_limit = (range / radius * (1.0 + BOUND_SLACK)).floor() as usize + 1;
    let empirical_limit = range / (2.0 * radius) + 1.0;
    let min_separation = summary.min_separation();
    BandBoundReport {
        bands,
        theorem_limit,
        empirical_limit,
        theorem_bound_ok: bands <= theorem_limit,
        empirical_bound_ok: bands as f64 <= empirical_limit * (1.0 + BOUND_SLACK),
        min_separation,
        min_separation_ok: min_separation.is_none_or(|s| s >= radius * (1.0 - BOUND_SLACK)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    /// `log2(count / total / bin_width)`; `-inf` for empty bins.
    pub log2_density: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|k| self.lo + (k as f64 + 0.5) * w).collect()
    }
}

/// Uniform-bin histogram over `[lo, hi]`; values outside the range are not
/// binned but still count toward the total.
pub fn density_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if !(lo < hi) {
        return Err(Error::InvalidProblem(format!("histogram range [{lo}, {hi}] is empty")));
    }
    if bins < 2 {
        return Err(Error::InvalidProblem(format!("need at least 2 bins, got {bins}")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v <= hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let total = values.len() as f64;
    let log2_density = counts
        .iter()
        .map(|&c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / total / width).log2() })
        .collect();
    Ok(Histogram { lo, hi, counts, log2_density })
}

/// Largest difference quotient between axis-adjacent nodes.
pub fn lipschitz_estimate(w: &GridFunction) -> f64 {
    let grid = w.grid();
    let values = w.values();
    let h = grid.h();
    let counts = grid.counts();
    let strides = grid.strides();
    let mut best = 0.0_f64;
    for node in 0..grid.len() {
        let mut rem = node;
        for axis in 0..grid.dim() {
            let k = rem / strides[axis];
            rem %= strides[axis];
            if k + 1 < counts[axis] {
                let d = (values[node + strides[axis]] - values[node]).abs() / h;
                best = best.max(d);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, Domain, Grid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn single_band() {
        let s = detect_bands(&[0.3; 10], 0.1).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.band_masses, vec![1.0]);
        assert!(s.separations.is_empty());
    }

    #[test]
    fn two_constructed_bands() {
        let mut v = vec![0.0; 50];
        v.extend(vec![0.4; 50]);
        let s = detect_bands(&v, 0.1).unwrap();
        assert_eq!(s.band_centers, vec![0.0, 0.4]);
        assert_eq!(s.band_masses, vec![0.5, 0.5]);
        assert_eq!(s.separations, vec![0.4]);
    }

    #[test]
    fn detect_rejects_bad_input() {
        assert!(detect_bands(&[], 0.1).is_err());
        assert!(detect_bands(&[f64::NAN], 0.1).is_err());
        assert!(detect_bands(&[0.0], 0.0).is_err());
    }

    fn summary(centers: &[f64]) -> BandSummary {
        let values: Vec<f64> = centers.iter().flat_map(|&c| [c; 3]).collect();
        detect_bands(&values, 0.05).unwrap()
    }

    #[test]
    fn one_band_passes_every_bound() {
        let r = check_band_bounds(&summary(&[0.0]), 0.7, 0.2);
        assert!(r.theorem_bound_ok && r.empirical_bound_ok && r.min_separation_ok);
    }

    #[test]
    fn sharp_construction_attains_theorem_bound() {
        let r = 0.2;
        for b in [2usize, 3, 5] {
            let centers: Vec<f64> = (0..b).map(|k| k as f64 * r).collect();
            let report = check_band_bounds(&summary(&centers), (b - 1) as f64 * r, r);
            assert!(report.theorem_bound_ok);
            assert_eq!(report.theorem_limit, b);
            assert!(report.min_separation_ok);
        }
    }

    #[test]
    fn empirical_bound_flags_too_many_bands() {
        let report = check_band_bounds(&summary(&[0.0, 0.25, 0.5, 0.75, 1.0]), 1.0, 0.2);
        assert_relative_eq!(report.empirical_limit, 3.5);
        assert!(!report.empirical_bound_ok);
        assert!(report.theorem_bound_ok);
    }

    #[test]
    fn histograms() {
        let h = density_histogram(&[0.1; 20], 4, 0.0, 1.0).unwrap();
        assert_eq!(h.counts, vec![20, 0, 0, 0]);
        assert_eq!(h.log2_density[1], f64::NEG_INFINITY);
        assert_relative_eq!(h.log2_density[0], 2.0);

        let uniform: Vec<f64> = (0..1001).map(|i| i as f64 / 1000.0).collect();
        let h = density_histogram(&uniform, 4, 0.0, 1.0).unwrap();
        assert!(h.counts.iter().all(|&c| (c as i64 - 250).abs() <= 1), "{:?}", h.counts);

        let mut two = vec![-0.2; 60];
        two.extend(vec![0.2; 41]);
        let h = density_histogram(&two, 200, -1.0, 1.0).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 2);
        assert_eq!(h.bin_centers().len(), 200);

        assert!(density_histogram(&[0.0], 4, 1.0, 1.0).is_err());
        assert!(density_histogram(&[0.0], 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn lipschitz_of_simple_profiles() {
        let g = Arc::new(Grid::build(Domain::interval(-0.5, 0.5).unwrap(), 0.01).unwrap());
        let w = sample(&g, |x| 3.5 * x[0]).unwrap();
        assert_relative_eq!(lipschitz_estimate(&w), 3.5, max_relative = 1e-9);
        assert_eq!(lipschitz_estimate(&sample(&g, |_| 2.0).unwrap()), 0.0);

        let g2 = Arc::new(Grid::build(Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 0.1).unwrap());
        let w2 = sample(&g2, |x| x[0] - 2.0 * x[1]).unwrap();
        assert_relative_eq!(lipschitz_estimate(&w2), 2.0, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn bands_are_permutation_invariant(
            mut values in proptest::collection::vec(-2.0f64..2.0, 1..60),
            seed in 0usize..1000,
        ) {
            let a = detect_bands(&values, 0.1).unwrap();
            let n = values.len();
            values.rotate_left(seed % n);
            values.reverse();
            let b = detect_bands(&values, 0.1).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bands_scale_with_values(
            values in proptest::collection::vec(-2.0f64..2.0, 1..60),
            exp in -3i32..4,
        ) {
            let k = 2f64.powi(exp);
            let a = detect_bands(&values, 0.1).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
            let b = detect_bands(&scaled, 0.1 * k).unwrap();
            prop_assert_eq!(a.count(), b.count());
            for (x, y) in a.band_centers.iter().zip(&b.band_centers) {
                prop_assert!((x * k - y).abs() <= 1e-12 * k.max(1.0));
            }
            let mass: f64 = b.band_masses.iter().sum();
            prop_assert!((mass - 1.0).abs() <= 1e-12);
        }
    }
}
