//! Postselected weak measurements with technical noise in the meter
//! preparation.
//!
//! Three independent computational paths produce the same readout
//! statistics and are cross-checked against each other:
//!
//! - [`analytic`]: closed-form shifts, moments and signal-to-noise ratios in
//!   the weak-value (AAV) regime, plus the exact qubit readout density.
//! - [`oracle`]: exact evolution of system ⊗ discretized meter, with no
//!   weak-value approximation, averaged over the preparation noise by
//!   Gauss–Hermite quadrature.
//! - [`montecarlo`]: per-run sampling of the preparation shift, the
//!   postselection outcome and the meter readout.
//!
//! Gaussian widths follow the `exp(-x²/Δ²)` convention throughout: a density
//! proportional to `exp(-x²/Δ²)` has standard deviation `Δ/√2`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytic;
pub mod error;
pub mod meter;
pub mod montecarlo;
pub mod oracle;
pub mod quadrature;
pub mod quantum;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64;
