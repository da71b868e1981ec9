//! Deterministic quadrature kernels: Gauss–Legendre nodes, a tanh–sinh rule
//! on (0,1) for endpoint-singular integrands, and the trapezoid helpers used
//! on the mode grid.

use crate::C64;

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_deriv(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates a complex-valued function over [a, b] with composite
/// Gauss–Legendre (32 nodes per panel).
pub fn gl_integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, panels: usize) -> C64 {
    let (xs, ws) = gauss_legendre(32);
    let mut total = C64::new(0.0, 0.0);
    let panels = panels.max(1);
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + step * p as f64;
        let half = 0.5 * step;
        let mid = lo + half;
        let mut acc = C64::new(0.0, 0.0);
        for (x, w) in xs.iter().zip(&ws) {
            acc += f(mid + half * x) * *w;
        }
        total += acc * half;
    }
    total
}

/// tanh–sinh rule on (0, 1) for real integrands, robust to algebraic
/// endpoint singularities like u^{a-1}(1-u)^{b-1}. The integrand receives
/// both u and 1-u, each computed without cancellation.
pub fn tanh_sinh_01<F: Fn(f64, f64) -> f64>(f: F) -> f64 {
    let mut acc = 0.0;
    for (u, um, w) in TanhSinh::new() {
        acc += w * f(u, um);
    }
    acc
}

/// Complex variant of [`tanh_sinh_01`].
pub fn tanh_sinh_01_c<F: Fn(f64, f64) -> C64>(f: F) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (u, um, w) in TanhSinh::new() {
        acc += f(u, um) * w;
    }
    acc
}

/// Fixed tanh–sinh abscissa/weight stream: u = (1+tanh((π/2) sinh t))/2 on a
/// uniform t-mesh. h=1/16 over |t| <= 4 gives ~1e-13 on the Beta integrands
/// used in the oracles.
struct TanhSinh {
    i: i64,
}

impl TanhSinh {
    const H: f64 = 1.0 / 32.0;
    const RANGE: i64 = 192;
    fn new() -> Self {
        TanhSinh { i: -Self::RANGE }
    }
}

impl Iterator for TanhSinh {
    type Item = (f64, f64, f64);
    fn next(&mut self) -> Option<(f64, f64, f64)> {
        if self.i > Self::RANGE {
            return None;
        }
        let t = self.i as f64 * Self::H;
        self.i += 1;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let s = half_pi * t.sinh();
        // u = (1 + tanh s)/2 and 1-u via the stable logistic branches
        let (u, um) = if s >= 0.0 {
            let e = (-2.0 * s).exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            let e = (2.0 * s).exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        };
        let w = Self::H * half_pi * t.cosh() / (s.cosh() * s.cosh()) * 0.5;
        if !w.is_finite() || w < 1e-300 || u <= 0.0 || um <= 0.0 {
            return self.next();
        }
        Some((u, um, w))
    }
}

/// Trapezoid weight for node `i` on an `n`-node uniform grid (endpoint halving).
pub fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if n == 1 {
        return 1.0;
    }
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_exact_on_polynomials() {
        // 32-point rule integrates degree 63 exactly
        let v = gl_integrate(|x| C64::new(x.powi(7) - 3.0 * x * x + 1.0, 0.0), -1.0, 2.0, 1);
        // integral of x^7 over [-1,2] = (256-1)/8 wait: (2^8-1)/8 = 255/8; -3x^2 -> -(8+1)=-9; +1 -> 3
        let exact = 255.0 / 8.0 - 9.0 + 3.0;
        assert!((v.re - exact).abs() < 1e-12, "{} vs {exact}", v.re);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 u^{-1/2} du = 2
        let v = tanh_sinh_01(|u, _um| 1.0 / u.sqrt());
        assert!((v - 2.0).abs() < 1e-11, "{v}");
    }

    #[test]
    fn gl_oscillatory() {
        let v = gl_integrate(|x| C64::new(0.0, 3.0 * x).exp(), 0.0, 1.0, 4);
        let exact = (C64::new(0.0, 3.0).exp() - C64::new(1.0, 0.0)) / C64::new(0.0, 3.0);
        assert!((v - exact).norm() < 1e-13);
    }
}
