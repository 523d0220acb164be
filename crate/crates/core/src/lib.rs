//! Coupled nonlinear Schrödinger systems with a magnetic potential and local
//! plus Hartree-type nonlocal nonlinearities,
//!
//! ```text
//! i∂_tΦ_j − L_AΦ_j − V Φ_j + g_j(|Φ₁|²,…,|Φ_m|²)Φ_j
//!         + Σ_i (W_ij ∗ h(|Φ_i|)) h'(|Φ_j|)/|Φ_j| Φ_j = 0,
//! ```
//!
//! on a periodic box. The crate evolves the Cauchy problem (Strang splitting
//! and a Yosida-regularized Duhamel–Picard construction), computes standing
//! waves by normalized gradient flow, and audits the functional inequalities
//! and conservation laws of the well-posedness theory numerically.

pub mod config;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod groundstate;
pub mod magnetic;
pub mod nonlinear;
pub mod snapshot;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{lp_norm, make_grid, Field, Grid, GridSpec, LpNorm, C64};
pub use magnetic::PotentialSet;
pub use nonlinear::{Diagnostics, ExponentTable, LocalSpec, NonlocalSpec, Sign};
pub use system::System;
