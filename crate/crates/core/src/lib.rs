//! Fully distributed adaptive consensus for stochastic multi-agent systems.
//!
//! Agents follow `dx_i = (A x_i + B u_i) dt + C x_i dw` with one scalar
//! Brownian motion shared by all agents. Each agent drives its input from the
//! local neighborhood error `xi_i = sum_j a_ij (x_i - x_j)` and an adaptive
//! gain `c_i` integrating `e^{gamma t} xi_i^T Gamma xi_i`, so no global graph
//! information enters any agent's controller.
//!
//! - [`graph`]: Laplacians, spanning trees, leader/follower blocks, spectra.
//! - [`riccati`]: stochastic Riccati solver and the gains `K`, `Gamma`.
//! - [`protocol`]: per-agent inputs and gain rates for every protocol variant,
//!   plus validation of each variant's hypotheses.
//! - [`sim`]: Euler-Maruyama integration with reproducible per-path noise.
//! - [`analysis`]: mean-square curves, rate fits, Lyapunov monitoring.

pub mod graph;
pub mod riccati;
pub mod protocol;
pub mod sim;
pub mod analysis;
