//! Exact Fourier–Laplace transforms for two interacting random walkers with
//! attractive or repulsive on-site interaction, their sticky Brownian limits,
//! and the covariance and density-field formulas that follow from duality.

pub mod duality;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod simulator;
pub mod transforms;
