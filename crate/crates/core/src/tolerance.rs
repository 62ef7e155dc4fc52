//! Numeric tolerances shared across the crate.

/// Absolute elementwise tolerance for equality and invariant checks.
pub const EQ_TOL: f64 = 1e-10;

/// Tolerance for linear-algebra residuals (completeness, unitarity).
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Branches whose probability falls at or below this are treated as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-14;
