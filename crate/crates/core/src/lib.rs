//! Dual-directional LoS/NLoS path loss for Poisson small-cell networks with
//! Boolean rectangle blockages.
//!
//! The crate has two independent routes to every performance metric:
//!
//! * [`analysis`] evaluates the closed-form expressions (interference Laplace
//!   transform, coverage probability, SIR density, association probabilities,
//!   average achievable rate) by numerical integration built on [`quadrature`].
//! * [`simulate`] samples full network realizations from [`geometry`] and
//!   measures the same metrics empirically.
//!
//! [`experiments`] ties the two together into the figure sweeps and the
//! cross-validation report exposed by the command-line tool.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod pathloss;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use pathloss::{LinkKind, LinkState, NetworkParams};
