//! Spectral Galerkin machinery for nonlocal and local Cahn-Hilliard dynamics
//! with multiplicative cylindrical noise.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: box grids, the Neumann cosine eigenbasis, transforms and
//!   the H / V / V* norms,
//! - [`kernel`]: mollifier-generated interaction kernels, fast convolution,
//!   the nonlocal operator and the nonlocal energy,
//! - [`potential`]: double-well potentials, convex splitting and the Yosida
//!   regularization layer,
//! - [`noise`]: the truncated cylindrical Wiener model and the diffusion
//!   operator acting on it,
//! - [`solver`]: stabilized IMEX Euler-Maruyama integration of the projected
//!   coefficient SDE system,
//! - [`diagnostics`]: scalar functionals, balance residuals and moment
//!   estimators,
//! - [`experiments`]: reproducible study harnesses (nonlocal-to-local rate,
//!   continuous dependence, regularization and refinement sweeps).

pub mod diagnostics;
pub mod experiments;
pub mod kernel;
pub mod noise;
pub mod potential;
pub mod solver;
pub mod spectral;
mod util;
