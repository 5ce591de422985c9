//! Numerical solver for the nonlinear nonlocal diffusion equation
//!
//! ```text
//! u_t(x, t) = integral over the domain of K(x, y) rho'(u(x, t) - u(y, t)) dy
//! ```
//!
//! which describes myopic best-response dynamics of a continuum of players
//! choosing real-valued strategies in a Toeplitz game: the payoff of each
//! pairwise interaction depends only on the difference of the two strategies
//! through the recognition function `rho`, weighted by the interaction kernel
//! `K`.
//!
//! The crate provides
//!
//! * uniform grids and grid functions ([`grid`]),
//! * kernel families with Toeplitz row storage ([`kernels`]),
//! * recognition functions and their constants ([`recognition`]),
//! * the discrete nonlocality, payoff and residuals ([`nonlocal`]),
//! * forward-Euler stepping with maximum-principle and regularity monitors ([`solver`]),
//! * closed-form oracles and convergence studies ([`oracles`]),
//! * band detection and density histograms ([`analysis`]).
//!
//! Inner loops are data-parallel over grid nodes through rayon when the
//! `parallel` feature is enabled (the default); see [`exec::Execution`].

pub mod analysis;
pub mod error;
pub mod exec;
pub mod grid;
pub mod kernels;
pub mod nonlocal;
pub mod oracles;
pub mod recognition;
pub mod solver;

pub use analysis::{check_band_bounds, density_histogram, detect_bands, lipschitz_estimate, BandSummary};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{sample, Domain, Grid, GridFunction};
pub use kernels::{KernelFamily, KernelRows, KernelSpec, TableKernel};
pub use nonlocal::NonlocalContext;
pub use oracles::{convergence_study, OracleExample, OracleSpec, OrderEstimate};
pub use recognition::{RecognitionFamily, RecognitionSpec};
pub use solver::{solve, stable_tau, step, ProblemSpec, SolveResult, TimeStep};

/// Formats a float with 17 significant digits (`-inf`, `inf`, `nan` for
/// non-finite values). Output is stable across platforms.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}
