//! Numerical laboratory for spectral inequalities of Schrödinger operators
//! `H = -Δ + V` on truncated boxes.
//!
//! The crate measures exact discrete analogs of the constants appearing in
//! spectral inequalities of the form
//!
//! ```text
//! ||φ||_{L²(box)} ≤ K(λ, δ) ||φ||_{L²(Ω)}     for φ ∈ Ran P_λ(H),
//! ```
//!
//! where `Ω` is a sensor set whose per-cube density is controlled by a
//! parameter `δ`, and fits the growth of `K` in the spectral parameter
//! against the predicted exponents. On top of the spectral layer it builds
//! ghost-dimension liftings `Φ̂(x,s) = Σ α_k φ_k(x) S_{λ_k}(s)`, doubling and
//! three-ball diagnostics for divergence-form reductions, and heat-equation
//! observability constants with penalized-HUM null-control synthesis.
//!
//! Module map:
//!
//! * [`domain`] — grids, cube lattices, quadrature, potential families
//! * [`schrodinger`] — sparse operator assembly, eigensolves, spectral projections
//! * [`cache`] — binary eigenbasis disk cache
//! * [`sensor`] — sensor-set constructions and density verification
//! * [`specineq`] — Gram matrices, worst-case constants, exponent sweeps
//! * [`lifting`] — lifted fields, multipliers, doubling index, three-ball checks
//! * [`heatctrl`] — heat evolution, observability constants, HUM control
//!
//! All types are immutable after construction and all operations are pure
//! functions of their inputs, so values can be shared freely across threads.

pub mod cache;
pub mod domain;
pub mod error;
pub mod fit;
pub mod heatctrl;
pub mod lifting;
pub mod linalg;
pub mod schrodinger;
pub mod sensor;
pub mod specineq;

pub use error::{Error, Result};
