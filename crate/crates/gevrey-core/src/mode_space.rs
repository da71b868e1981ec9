//! Grid-sampled functions of the Fourier mode variable `m` with the weighted
//! sup norm, the kernel convolution (star) product that makes the space a
//! Banach algebra, and inverse Fourier evaluation on the strip |Im z| < beta.

use crate::error::{Error, Result};
use crate::quad::trapezoid_weight;
use crate::C64;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

static COMPENSATED: AtomicBool = AtomicBool::new(false);

/// Switches the convolution inner loops to Kahan-compensated accumulation
/// (the CLI `--precision extended` mode).
pub fn set_compensated_accumulation(on: bool) {
    COMPENSATED.store(on, Ordering::Relaxed);
}

#[derive(Default)]
struct KahanC {
    s: C64,
    c: C64,
}

impl KahanC {
    fn add(&mut self, x: C64) {
        let y = x - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }
}

/// Uniform symmetric grid on [-m_max, m_max] with an odd number of nodes, so
/// that m = 0 is always a node and node differences are again nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    pub m_max: f64,
    pub n_points: usize,
    nodes: Vec<f64>,
}

impl ModeGrid {
    pub fn new(m_max: f64, n_points: usize) -> Result<Arc<Self>> {
        if !(m_max > 0.0) || n_points < 3 || n_points % 2 == 0 {
            return Err(Error::Parse(format!(
                "mode grid needs m_max > 0 and odd n_points >= 3, got ({m_max}, {n_points})"
            )));
        }
        let h = 2.0 * m_max / (n_points - 1) as f64;
        let c = (n_points - 1) / 2;
        let nodes = (0..n_points).map(|i| (i as f64 - c as f64) * h).collect();
        Ok(Arc::new(ModeGrid { m_max, n_points, nodes }))
    }

    /// Default grid for given space parameters: m_max such that the profile
    /// e^{-beta m}(1+m)^{-mu} drops below 1e-10, 257 nodes.
    pub fn for_space(beta: f64, mu: f64) -> Result<Arc<Self>> {
        let target = 10.0 * std::f64::consts::LN_10;
        let mut lo = 1.0;
        let mut hi = 1.0;
        while beta * hi + mu * (1.0 + hi).ln() < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if beta * mid + mu * (1.0 + mid).ln() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ModeGrid::new(hi, 257)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.m_max / (self.n_points - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the node m = 0.
    pub fn center(&self) -> usize {
        (self.n_points - 1) / 2
    }
}

/// A function of `m` sampled on a [`ModeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunction {
    pub grid: Arc<ModeGrid>,
    pub values: Vec<C64>,
}

impl ModeFunction {
    pub fn zero(grid: Arc<ModeGrid>) -> Self {
        let n = grid.n_points;
        ModeFunction { grid, values: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn from_fn<F: Fn(f64) -> C64>(grid: Arc<ModeGrid>, f: F) -> Self {
        let values = grid.nodes().iter().map(|&m| f(m)).collect();
        ModeFunction { grid, values }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm_sqr() == 0.0)
    }

    pub fn scale(&self, c: C64) -> Self {
        ModeFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &ModeFunction, c: C64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * c;
        }
    }

    /// Pointwise multiplication by a function of the node value.
    pub fn map_with_m<F: Fn(f64, C64) -> C64>(&self, f: F) -> Self {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&m, &v)| f(m, v))
            .collect();
        ModeFunction { grid: self.grid.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Weighted sup norm: max over nodes of (1+|m|)^mu e^{beta|m|} |f(m)|.
pub fn weighted_norm(f: &ModeFunction, beta: f64, mu: f64) -> f64 {
    f.grid
        .nodes()
        .iter()
        .zip(&f.values)
        .map(|(&m, v)| (1.0 + m.abs()).powf(mu) * (beta * m.abs()).exp() * v.norm())
        .fold(0.0, f64::max)
}

/// Polynomial-kernel convolution
///
///   (f ⋆ g)(m) = (1/R(im)) ∫ Q1(i(m-m1)) f(m-m1) Q2(i m1) g(m1) dm1
///
/// by trapezoid quadrature on the shared grid; values outside the grid are
/// treated as zero. `q1`, `q2`, `r` are the kernel polynomials evaluated at
/// i·m (already specialized in epsilon if applicable).
pub fn star_product(
    f: &ModeFunction,
    g: &ModeFunction,
    q1: &dyn Fn(f64) -> C64,
    q2: &dyn Fn(f64) -> C64,
    r: &dyn Fn(f64) -> C64,
) -> Result<ModeFunction> {
    if f.grid != g.grid {
        return Err(Error::ShapeMismatch("star_product grids differ".into()));
    }
    let grid = &f.grid;
    let n = grid.n_points;
    let h = grid.spacing();
    let nodes = grid.nodes();
    let c = grid.center();

    // precompute the m1-side factor Q2(i m1) g(m1) w_j
    let rhs: Vec<C64> = (0..n)
        .map(|j| q2(nodes[j]) * g.values[j] * trapezoid_weight(j, n))
        .collect();
    let q1v: Vec<C64> = nodes.iter().map(|&m| q1(m)).collect();

    let compensated = COMPENSATED.load(Ordering::Relaxed);
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        let rm = r(nodes[i]);
        if rm.norm() == 0.0 {
            return Err(Error::KernelSingular { m: nodes[i] });
        }
        let acc = if compensated {
            let mut k_acc = KahanC::default();
            for (j, &rv) in rhs.iter().enumerate() {
                let k = i as i64 - j as i64 + c as i64;
                if k < 0 || k >= n as i64 {
                    continue;
                }
                k_acc.add(q1v[k as usize] * f.values[k as usize] * rv);
            }
            k_acc.s
        } else {
            let mut acc = C64::new(0.0, 0.0);
            for (j, &rv) in rhs.iter().enumerate() {
                // m_i - m_j is the node at index i - j + c when in range
                let k = i as i64 - j as i64 + c as i64;
                if k < 0 || k >= n as i64 {
                    continue;
                }
                acc += q1v[k as usize] * f.values[k as usize] * rv;
            }
            acc
        };
        *o = acc * h / rm;
    }
    Ok(ModeFunction { grid: grid.clone(), values: out })
}

/// Plain convolution f ∗ g (all kernels 1).
pub fn convolve(f: &ModeFunction, g: &ModeFunction) -> Result<ModeFunction> {
    let one = |_m: f64| C64::new(1.0, 0.0);
    star_product(f, g, &one, &one, &one)
}

/// Inverse Fourier transform (2π)^{-1/2} ∫ f(m) e^{izm} dm by trapezoid
/// quadrature, valid on the strip |Im z| < beta.
pub fn inverse_fourier(f: &ModeFunction, z: C64, beta: f64) -> Result<C64> {
    if z.im.abs() >= beta {
        return Err(Error::OutsideStrip { imz: z.im.abs(), beta });
    }
    let grid = &f.grid;
    let n = grid.n_points;
    let h = grid.spacing();
    let mut acc = C64::new(0.0, 0.0);
    for (j, (&m, v)) in grid.nodes().iter().zip(&f.values).enumerate() {
        let phase = (C64::new(0.0, 1.0) * z * m).exp();
        acc += v * phase * trapezoid_weight(j, n);
    }
    Ok(acc * h / (2.0 * std::f64::consts::PI).sqrt())
}

/// Writes a mode function as CSV with columns m, re, im.
pub fn write_mode_csv<W: Write>(w: &mut W, f: &ModeFunction) -> Result<()> {
    writeln!(w, "m,re,im")?;
    for (m, v) in f.grid.nodes().iter().zip(&f.values) {
        writeln!(w, "{},{},{}", crate::fmt_f64(*m), crate::fmt_f64(v.re), crate::fmt_f64(v.im))?;
    }
    Ok(())
}

/// Reads a mode function from CSV with columns m, re, im. The grid is
/// reconstructed from the m column, which must be uniform and symmetric.
pub fn read_mode_csv<R: BufRead>(r: R) -> Result<ModeFunction> {
    let mut ms: Vec<f64> = Vec::new();
    let mut vals: Vec<C64> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (lineno == 0 && t.starts_with('m')) {
            continue;
        }
        let mut it = t.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Parse(format!("short row at line {}", lineno + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        let m = parse(it.next())?;
        let re = parse(it.next())?;
        let im = parse(it.next())?;
        if !m.is_finite() || !re.is_finite() || !im.is_finite() {
            return Err(Error::Parse(format!("non-finite value at line {}", lineno + 1)));
        }
        ms.push(m);
        vals.push(C64::new(re, im));
    }
    if ms.len() < 3 || ms.len() % 2 == 0 {
        return Err(Error::Parse("mode CSV needs an odd number of rows >= 3".into()));
    }
    let n = ms.len();
    let m_max = ms[n - 1];
    if !(m_max > 0.0) || (ms[0] + m_max).abs() > 1e-9 * m_max {
        return Err(Error::Parse("mode CSV grid is not symmetric".into()));
    }
    let h = 2.0 * m_max / (n - 1) as f64;
    for (i, &m) in ms.iter().enumerate() {
        if (m - (-m_max + h * i as f64)).abs() > 1e-9 * m_max.max(1.0) {
            return Err(Error::Parse("mode CSV grid is not uniform".into()));
        }
    }
    let grid = ModeGrid::new(m_max, n)?;
    Ok(ModeFunction { grid, values: vals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid8() -> Arc<ModeGrid> {
        // h = 0.125, contains ±1 exactly
        ModeGrid::new(8.0, 129).unwrap()
    }

    #[test]
    fn grid_is_symmetric_and_centered() {
        let g = grid8();
        assert_eq!(g.nodes()[g.center()], 0.0);
        let n = g.n_points;
        for i in 0..n {
            assert!((g.nodes()[i] + g.nodes()[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_norm_cancels_profile() {
        let g = grid8();
        let (beta, mu) = (1.0, 2.0);
        let f = ModeFunction::from_fn(g, |m| {
            C64::new((-beta * m.abs()).exp() * (1.0 + m.abs()).powf(-mu), 0.0)
        });
        assert!((weighted_norm(&f, beta, mu) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_norm_zero_and_exp() {
        let g = grid8();
        assert_eq!(weighted_norm(&ModeFunction::zero(g.clone()), 1.0, 2.0), 0.0);
        // f = e^{-2|m|}, beta=1, mu=2: sup (1+t)^2 e^{-t} = 4/e at t=1 (a node)
        let f = ModeFunction::from_fn(g, |m| C64::new((-2.0 * m.abs()).exp(), 0.0));
        let expect = 4.0 / std::f64::consts::E;
        assert!((weighted_norm(&f, 1.0, 2.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn weighted_norm_homogeneous() {
        let g = grid8();
        let f = ModeFunction::from_fn(g, |m| C64::new((-m * m).exp(), 0.3 * (-m.abs()).exp()));
        let c = C64::new(-2.5, 1.25);
        let lhs = weighted_norm(&f.scale(c), 1.0, 2.0);
        let rhs = c.norm() * weighted_norm(&f, 1.0, 2.0);
        assert!((lhs - rhs).abs() <= 1e-13 * rhs.max(1.0));
    }

    #[test]
    fn star_gaussian_closed_form() {
        let g = grid8();
        let f = ModeFunction::from_fn(g.clone(), |m| C64::new((-m * m).exp(), 0.0));
        let s = convolve(&f, &f).unwrap();
        // e^{-m^2} * e^{-m^2} = sqrt(pi/2) e^{-m^2/2}
        let c0 = (std::f64::consts::PI / 2.0).sqrt();
        let at0 = s.values[g.center()];
        assert!((at0.re - c0).abs() < 1e-9, "{at0} vs {c0}");
        let at1 = s.values[g.center() + 8]; // m = 1
        assert!((at1.re - c0 * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn star_with_zero_is_zero() {
        let g = grid8();
        let f = ModeFunction::from_fn(g.clone(), |m| C64::new((-m * m).exp(), 0.0));
        let z = ModeFunction::zero(g);
        assert!(convolve(&f, &z).unwrap().is_zero());
    }

    #[test]
    fn star_odd_kernel_vanishes_at_origin() {
        // Q1 = X evaluated at i(m - m1) makes the m=0 integrand odd
        let g = grid8();
        let f = ModeFunction::from_fn(g.clone(), |m| C64::new((-m * m).exp(), 0.0));
        let q1 = |m: f64| C64::new(0.0, m); // X at X = i m
        let one = |_m: f64| C64::new(1.0, 0.0);
        let s = star_product(&f, &f, &q1, &one, &one).unwrap();
        assert!(s.values[g.center()].norm() < 1e-12);
    }

    #[test]
    fn star_singular_kernel_reports() {
        let g = grid8();
        let f = ModeFunction::from_fn(g.clone(), |m| C64::new((-m * m).exp(), 0.0));
        let one = |_m: f64| C64::new(1.0, 0.0);
        // R = X at X = im vanishes at m = 0
        let r = |m: f64| C64::new(0.0, m);
        match star_product(&f, &f, &one, &one, &r) {
            Err(Error::KernelSingular { m }) => assert_eq!(m, 0.0),
            other => panic!("expected KernelSingular, got {other:?}"),
        }
    }

    #[test]
    fn inverse_fourier_gaussian() {
        let g = grid8();
        let f = ModeFunction::from_fn(g, |m| C64::new((-0.5 * m * m).exp(), 0.0));
        // F^{-1}(e^{-m^2/2})(z) = e^{-z^2/2}
        let v = inverse_fourier(&f, C64::new(0.3, 0.0), 1.0).unwrap();
        assert!((v.re - (-0.045f64).exp()).abs() < 1e-10, "{v}");
        let z = C64::new(0.2, 0.4);
        let v = inverse_fourier(&f, z, 1.0).unwrap();
        let exact = (-z * z / 2.0).exp();
        assert!((v - exact).norm() < 1e-9);
    }

    #[test]
    fn inverse_fourier_outside_strip() {
        let g = grid8();
        let f = ModeFunction::zero(g);
        assert!(matches!(
            inverse_fourier(&f, C64::new(0.0, 1.5), 1.0),
            Err(Error::OutsideStrip { .. })
        ));
    }

    #[test]
    fn inverse_fourier_derivative_property() {
        // d/dz F^{-1}(f)(z) = F^{-1}(im f)(z), checked by central differences
        let g = grid8();
        let f = ModeFunction::from_fn(g, |m| {
            C64::new((-0.7 * m * m).exp(), 0.1 * m * (-m * m).exp())
        });
        let phi = f.map_with_m(|m, v| v * C64::new(0.0, m));
        let z = C64::new(0.11, 0.0);
        let hstep = 1e-4;
        let fp = inverse_fourier(&f, z + hstep, 1.0).unwrap();
        let fm = inverse_fourier(&f, z - hstep, 1.0).unwrap();
        let fd = (fp - fm) / (2.0 * hstep);
        let dz = inverse_fourier(&phi, z, 1.0).unwrap();
        assert!((fd - dz).norm() < 1e-6, "{fd} vs {dz}");
    }

    #[test]
    fn fourier_product_is_convolution() {
        // F^{-1}(f) F^{-1}(g) = F^{-1}((2π)^{-1/2} f ∗ g)
        let g = grid8();
        let f1 = ModeFunction::from_fn(g.clone(), |m| C64::new((-m * m).exp(), 0.0));
        let f2 = ModeFunction::from_fn(g.clone(), |m| C64::new((-0.8 * m * m).exp(), 0.0));
        let conv = convolve(&f1, &f2).unwrap().scale(C64::new(
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            0.0,
        ));
        for &zr in &[0.0, 0.4, -0.9] {
            let z = C64::new(zr, 0.1);
            let lhs = inverse_fourier(&f1, z, 1.0).unwrap() * inverse_fourier(&f2, z, 1.0).unwrap();
            let rhs = inverse_fourier(&conv, z, 1.0).unwrap();
            assert!((lhs - rhs).norm() < 1e-8, "z={z}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn mode_csv_round_trip() {
        let g = ModeGrid::new(2.0, 9).unwrap();
        let f = ModeFunction::from_fn(g, |m| C64::new(m * 0.25 - 1.0, (-m * m).exp()));
        let mut buf = Vec::new();
        write_mode_csv(&mut buf, &f).unwrap();
        let back = read_mode_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(f, back);
    }
}
