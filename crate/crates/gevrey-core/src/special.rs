//! Gamma/Beta kernel. Everything that needs a Gamma value goes through
//! `ln_gamma` here (log domain, arguments are always positive in this crate),
//! so the Beta weights, Gamma ratios and Borel divisors are mutually
//! consistent.

use statrs::function::gamma::ln_gamma;

/// ln Γ(x) for x > 0.
pub fn ln_gamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma_pos needs x > 0, got {x}");
    ln_gamma(x)
}

/// Γ(x) for x > 0.
pub fn gamma_pos(x: f64) -> f64 {
    ln_gamma_pos(x).exp()
}

/// Euler Beta function B(x, y) = Γ(x)Γ(y)/Γ(x+y) for x, y > 0.
pub fn beta(x: f64, y: f64) -> f64 {
    (ln_gamma_pos(x) + ln_gamma_pos(y) - ln_gamma_pos(x + y)).exp()
}

/// Γ(a)/Γ(b) for a, b > 0, evaluated in the log domain.
pub fn gamma_ratio(a: f64, b: f64) -> f64 {
    (ln_gamma_pos(a) - ln_gamma_pos(b)).exp()
}

/// Falling factorial q(q-1)...(q-delta+1) as f64 (exact for the small
/// integers used by the recursion).
pub fn falling(q: i64, delta: u32) -> f64 {
    let mut p = 1.0;
    for j in 0..delta as i64 {
        p *= (q - j) as f64;
    }
    p
}
