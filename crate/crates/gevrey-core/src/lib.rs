//! Numerical Borel–Laplace summation for singularly perturbed Cauchy problems
//! in two complex time variables.
//!
//! The library works with truncated bivariate power series whose coefficients
//! are functions of a real Fourier mode variable `m` sampled on a symmetric
//! grid. It provides:
//!
//! * problem instances (exponent tables, polynomial data, generated
//!   coefficient/forcing families) with full validation ([`instance`]),
//! * the weighted mode space with its kernel convolution and inverse Fourier
//!   evaluation ([`mode_space`]),
//! * the formal-solution recursion by direct coefficient matching ([`series`]),
//! * the mk-Borel coefficient calculus and weighted Borel-plane norms
//!   ([`borel`]),
//! * the convolution fixed point solved by Picard iteration ([`fixed_point`]),
//! * root/sector geometry and good coverings of the punctured parameter disc
//!   ([`geometry`]),
//! * Laplace–Fourier evaluation of sectorial solutions, Gevrey and decay-level
//!   fitting, and the structural classification of solution differences
//!   ([`summation`]).

pub mod borel;
pub mod error;
pub mod fixed_point;
pub mod geometry;
pub mod instance;
pub mod mode_space;
pub mod quad;
pub mod series;
pub mod special;
pub mod summation;

pub use error::Error;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Formats a float with 17 significant digits, enough to round-trip `f64`.
/// All CSV/JSON emitters go through this so outputs are byte-stable.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}
