//! Numerical laboratory for subordinate Brownian motion on Sierpinski gasket
//! graphs perturbed by Poissonian random potentials.
//!
//! The crate builds exact level-`n` graph approximations of the gasket
//! triangles `G_M = 2^M G_0`, assembles the mass-symmetric random-walk
//! generator and its subordinated versions `Φ(H)`, samples Poisson obstacle
//! clouds, and estimates annealed spectral quantities (traces, integrated
//! density of states, survival probabilities) together with the bound
//! certificates they are expected to satisfy.

pub mod cli;
pub mod error;
pub mod gasket;
pub mod ids;
pub mod linalg;
pub mod montecarlo;
pub mod numerics;
pub mod obstacles;
pub mod operators;
pub mod potentials;
pub mod rng;
pub mod subordinators;

pub use error::{LabError, Result};

/// Hausdorff dimension `d = log 3 / log 2` of the gasket.
pub const DIM_H: f64 = 1.584_962_500_721_156_2;
/// Walk dimension `d_w = log 5 / log 2`.
pub const DIM_W: f64 = 2.321_928_094_887_362_3;
/// Spectral dimension `d_s = 2 d / d_w`.
pub const DIM_S: f64 = 2.0 * DIM_H / DIM_W;

/// Exact time factor `2^{-M d_w} = 5^{-M}`.
pub fn time_factor(m: u32) -> f64 {
    1.0 / 5f64.powi(m as i32)
}

/// Exact mass factor `2^{M d} = 3^M`.
pub fn mass_factor(m: u32) -> f64 {
    3f64.powi(m as i32)
}
