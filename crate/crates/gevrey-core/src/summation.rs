//! Laplace–Fourier evaluation of sectorial solutions from disc-truncated
//! Borel data, Gevrey-order and decay-level fitting, and the structural
//! classification of covering-cell pairs.

use crate::borel::BorelTable;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, GoodCovering};
use crate::instance::ProblemInstance;
use crate::mode_space::{inverse_fourier, ModeFunction};
use crate::quad::gl_integrate;
use crate::special::ln_gamma_pos;
use crate::C64;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    /// ray truncation radius (at most the Borel disc radius)
    pub r_cut: f64,
    /// quadrature nodes per ray
    pub nodes: usize,
    /// lower bound for cos(k(gamma - arg T))
    pub delta1: f64,
    /// certified-domain tolerance for the tail bound
    pub tolerance: f64,
}

impl QuadratureSpec {
    pub fn for_instance(inst: &ProblemInstance) -> Self {
        QuadratureSpec { r_cut: inst.space.rho, nodes: 192, delta1: 0.5, tolerance: 1e-8 }
    }

    /// Spec with the stated ray radius; keeps the other defaults.
    pub fn with_r_cut(r_cut: f64) -> Self {
        QuadratureSpec { r_cut, nodes: 192, delta1: 0.5, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LaplaceValue {
    pub value: C64,
    /// crude truncation estimate exp(-delta1 (r_cut/|T|)^k)
    pub tail_bound: f64,
}

/// Laplace transform of order k of a Borel-plane function along the ray
/// re^{i gamma}:  k ∫_0^{r_cut} f(re^{i gamma}) e^{-(re^{i gamma}/T)^k} dr/r.
/// The integrand must vanish at the origin (all table series do).
pub fn laplace_ray(
    f: &dyn Fn(C64) -> C64,
    k: u32,
    gamma: f64,
    t: C64,
    q: &QuadratureSpec,
) -> Result<LaplaceValue> {
    if t.norm() == 0.0 {
        return Err(Error::Parse("laplace_ray: T must be nonzero".into()));
    }
    let cosv = (k as f64 * (gamma - t.arg())).cos();
    if cosv < q.delta1 {
        return Err(Error::InvalidDirection { cosv, delta1: q.delta1 });
    }
    let dir = C64::from_polar(1.0, gamma);
    let kk = k as f64;
    let integrand = |r: f64| -> C64 {
        if r == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let u = dir * r;
        f(u) * (-(u / t).powi(k as i32)).exp() / r
    };
    // concentrate panels where the kernel is alive
    let r_eff = (t.norm() * 80f64.powf(1.0 / kk)).min(q.r_cut);
    let panels = (q.nodes / 32).max(4);
    let mut total = gl_integrate(integrand, 0.0, r_eff, panels);
    if r_eff < q.r_cut {
        total += gl_integrate(integrand, r_eff, q.r_cut, 2);
    }
    let tail_bound = (-q.delta1 * (q.r_cut / t.norm()).powf(kk)).exp();
    Ok(LaplaceValue { value: total * kk, tail_bound })
}

/// Per-point integration direction: within the admissible bend around the
/// cell direction, the ray maximizing the kernel cosine. The kernel is
/// 2π/k-periodic in the direction, so the optimum is the representative of
/// arg T modulo that period nearest the window.
pub fn choose_gamma(k: u32, arg_t: f64, d_cell: f64, bend: f64, delta1: f64) -> Result<f64> {
    let period = 2.0 * std::f64::consts::PI / k as f64;
    let j = ((d_cell - arg_t) / period).round();
    let ideal = arg_t + j * period;
    let gamma = ideal.clamp(d_cell - bend, d_cell + bend);
    let cosv = (k as f64 * (gamma - arg_t)).cos();
    if cosv < delta1 {
        return Err(Error::InvalidDirection { cosv, delta1 });
    }
    Ok(gamma)
}

/// Axis moment values lambda(n) = k e^{i gamma n} ∫_0^{r_cut} r^{n-1}
/// e^{-(re^{i gamma}/T)^k} dr for n = 1..=n_max.
fn axis_moments(
    k: u32,
    gamma: f64,
    t: C64,
    n_max: usize,
    q: &QuadratureSpec,
) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let f = move |u: C64| u.powi(n as i32);
        out.push(laplace_ray(&f, k, gamma, t, q)?.value);
    }
    Ok(out)
}

/// Evaluates the sectorial solution at (t1, t2, z, eps) for one covering
/// cell: iterated Laplace transforms of the truncated Borel table along the
/// cell multidirections followed by inverse Fourier summation over the mode
/// grid.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_u(
    inst: &ProblemInstance,
    omega: &BorelTable,
    cov: &GoodCovering,
    cell: (usize, usize),
    t1: C64,
    t2: C64,
    z: C64,
    eps: C64,
    q: &QuadratureSpec,
) -> Result<C64> {
    let (p1, p2) = cell;
    if p1 >= cov.sigma1 || p2 >= cov.sigma2 {
        return Err(Error::Parse(format!("cell ({p1},{p2}) outside covering")));
    }
    let cellrec = cov
        .cells
        .iter()
        .find(|c| c.p1 == p1 && c.p2 == p2)
        .ok_or_else(|| Error::Parse(format!("cell ({p1},{p2}) missing from covering")))?;
    if !cellrec.sector.contains(eps) {
        return Err(Error::OutsideCertifiedDomain { tail: f64::INFINITY, tol: q.tolerance });
    }
    if !cov.t1.contains(t1) || !cov.t2.contains(t2) {
        return Err(Error::OutsideCertifiedDomain { tail: f64::INFINITY, tol: q.tolerance });
    }
    let big_t1 = eps * t1;
    let big_t2 = eps * t2;
    for (k, bt) in [(cov.k1, big_t1), (cov.k2, big_t2)] {
        let tail = (-q.delta1 * (q.r_cut / bt.norm()).powf(k as f64)).exp();
        if tail > q.tolerance {
            return Err(Error::OutsideCertifiedDomain { tail, tol: q.tolerance });
        }
    }
    let g1 = choose_gamma(cov.k1, big_t1.arg(), cov.d1[p1], cov.bend1, q.delta1)?;
    let g2 = choose_gamma(cov.k2, big_t2.arg(), cov.d2[p2], cov.bend2, q.delta1)?;
    let lam1 = axis_moments(cov.k1, g1, big_t1, omega.table.n1_max, q)?;
    let lam2 = axis_moments(cov.k2, g2, big_t2, omega.table.n2_max, q)?;
    let t = &omega.table;
    let fm = ModeFunction::from_fn(t.grid.clone(), |_| C64::new(0.0, 0.0));
    let mut fm = fm;
    for mi in 0..t.grid.n_points {
        let mut acc = C64::new(0.0, 0.0);
        for (n1, n2) in t.iter_indices() {
            let c = t.entry(n1, n2).values[mi];
            if c.norm_sqr() != 0.0 {
                acc += c * lam1[n1 - 1] * lam2[n2 - 1];
            }
        }
        fm.values[mi] = acc;
    }
    inverse_fourier(&fm, z, inst.space.beta)
}

/// Truncated-series reference: sum of U_{n1,n2}(m) T1^{n1} T2^{n2} pushed
/// through the same inverse Fourier summation.
pub fn series_reference(
    inst: &ProblemInstance,
    u: &crate::series::CoeffTable,
    big_t1: C64,
    big_t2: C64,
    z: C64,
) -> Result<C64> {
    let mut fm = ModeFunction::zero(u.grid.clone());
    for mi in 0..u.grid.n_points {
        let mut acc = C64::new(0.0, 0.0);
        for n1 in (1..=u.n1_max).rev() {
            let mut inner = C64::new(0.0, 0.0);
            for n2 in (1..=u.n2_max).rev() {
                inner = inner * big_t2 + u.entry(n1, n2).values[mi];
            }
            acc = acc * big_t1 + inner * big_t2;
        }
        fm.values[mi] = acc * big_t1;
    }
    inverse_fourier(&fm, z, inst.space.beta)
}

// ---------------------------------------------------------------------------
// fits

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub k_est: f64,
    pub m: f64,
    pub k_amp: f64,
    pub residual: f64,
    pub note: String,
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Least squares of y ~ a + b x; returns (a, b, sse).
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / det;
    let a = (sy - b * sx) / n;
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - a - b * x;
            e * e
        })
        .sum();
    (a, b, sse)
}

/// Fits log a_n ~ log C + n log M + ln Γ(1 + n/k) over the order parameter k.
/// Sequences without factorial growth are flagged as convergent-type.
pub fn gevrey_fit(norms: &[f64]) -> Result<DecayFit> {
    if norms.len() < 8 {
        return Err(Error::DegenerateFit(format!("need >= 8 terms, got {}", norms.len())));
    }
    if norms.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::DegenerateFit("non-positive entry in norm sequence".into()));
    }
    let ns: Vec<f64> = (1..=norms.len()).map(|n| n as f64).collect();
    let logs: Vec<f64> = norms.iter().map(|a| a.ln()).collect();
    let sse_at = |k: f64| -> f64 {
        let ys: Vec<f64> = logs
            .iter()
            .zip(&ns)
            .map(|(l, n)| l - ln_gamma_pos(1.0 + n / k))
            .collect();
        linear_fit(&ns, &ys).2
    };
    // coarse scan in log k, then golden refinement around the best bracket
    let (klo, khi) = (0.1f64, 100.0f64);
    let mut best = (f64::INFINITY, klo);
    let scan = 96;
    for i in 0..=scan {
        let k = klo * (khi / klo).powf(i as f64 / scan as f64);
        let s = sse_at(k);
        if s < best.0 {
            best = (s, k);
        }
    }
    let k_est = golden_min(sse_at, best.1 / 1.6, best.1 * 1.6, 80);
    let ys: Vec<f64> = logs
        .iter()
        .zip(&ns)
        .map(|(l, n)| l - ln_gamma_pos(1.0 + n / k_est))
        .collect();
    let (a, b, sse) = linear_fit(&ns, &ys);
    let mut note = String::new();
    let mut k_out = k_est;
    if k_est > 0.9 * khi {
        // indistinguishable from a plain geometric sequence
        note = "convergent-type".into();
        k_out = f64::INFINITY;
    }
    Ok(DecayFit {
        k_est: k_out,
        m: b.exp(),
        k_amp: a.exp(),
        residual: (sse / norms.len() as f64).sqrt(),
        note,
    })
}

/// Fits log diff ~ log K - M |eps|^{-k} over k. Non-decaying samples are
/// flagged with k_est = 0.
pub fn decay_fit(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < 5 {
        return Err(Error::DegenerateFit(format!("need >= 5 samples, got {}", samples.len())));
    }
    if samples.iter().any(|&(e, d)| !(e > 0.0) || !(d > 0.0) || !d.is_finite()) {
        return Err(Error::DegenerateFit("samples must have positive eps and diff".into()));
    }
    let emin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let emax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if emax / emin < 10.0 {
        return Err(Error::DegenerateFit("|eps| must span at least one decade".into()));
    }
    let logs: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let fit_at = |k: f64| -> (f64, f64, f64) {
        let xs: Vec<f64> = samples.iter().map(|s| -s.0.powf(-k)).collect();
        linear_fit(&xs, &logs)
    };
    let sse_at = |k: f64| fit_at(k).2;
    let (klo, khi) = (0.1f64, 10.0f64);
    let mut best = (f64::INFINITY, klo);
    for i in 0..=96 {
        let k = klo * (khi / klo).powf(i as f64 / 96.0);
        let s = sse_at(k);
        if s < best.0 {
            best = (s, k);
        }
    }
    let k_est = golden_min(sse_at, best.1 / 1.6, best.1 * 1.6, 80);
    let (a, b, sse) = fit_at(k_est);
    if b <= 0.0 {
        return Ok(DecayFit {
            k_est: 0.0,
            m: b,
            k_amp: a.exp(),
            residual: (sse / samples.len() as f64).sqrt(),
            note: "non-decaying".into(),
        });
    }
    Ok(DecayFit {
        k_est,
        m: b,
        k_amp: a.exp(),
        residual: (sse / samples.len() as f64).sqrt(),
        note: String::new(),
    })
}

// ---------------------------------------------------------------------------
// structural classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    U0,
    Uk1,
    Uk2,
}

pub type CellPair = ((usize, usize), (usize, usize));

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub u0: Vec<CellPair>,
    pub uk1: Vec<CellPair>,
    pub uk2: Vec<CellPair>,
}

/// Classifies one unordered pair of distinct cells.
pub fn classify_pair(cov: &GoodCovering, a: (usize, usize), b: (usize, usize)) -> PairClass {
    let sa = &cov.cells.iter().find(|c| (c.p1, c.p2) == a).unwrap().sector;
    let sb = &cov.cells.iter().find(|c| (c.p1, c.p2) == b).unwrap().sector;
    if !sa.overlaps(sb) {
        return PairClass::U0;
    }
    if a.0 == b.0 && a.1 != b.1 {
        PairClass::Uk2
    } else {
        PairClass::Uk1
    }
}

/// Classifies every unordered pair of distinct cells: intersecting cells with
/// the same first direction and different second go to the k2 class, all
/// other intersecting pairs to the k1 class, disjoint pairs to the trivial
/// class.
pub fn classify_pairs(cov: &GoodCovering) -> Classification {
    let mut out = Classification { u0: Vec::new(), uk1: Vec::new(), uk2: Vec::new() };
    let labels: Vec<(usize, usize)> = cov.cells.iter().map(|c| (c.p1, c.p2)).collect();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let pair = (labels[i], labels[j]);
            match classify_pair(cov, labels[i], labels[j]) {
                PairClass::U0 => out.u0.push(pair),
                PairClass::Uk1 => out.uk1.push(pair),
                PairClass::Uk2 => out.uk2.push(pair),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_good_covering, default_time_sector};
    use crate::instance::examples::inst_a;
    use crate::mode_space::ModeGrid;
    use crate::special::gamma_pos;

    #[test]
    fn laplace_moment_identity() {
        // f(u) = u^n / Γ(n/k) has transform T^n
        let q = QuadratureSpec::with_r_cut(0.5);
        for (k, n, t) in [(2u32, 2usize, 0.1f64), (1, 1, 0.02), (3, 4, 0.15)] {
            let g = gamma_pos(n as f64 / k as f64);
            let f = move |u: C64| u.powi(n as i32) / g;
            let v = laplace_ray(&f, k, 0.0, C64::new(t, 0.0), &q).unwrap();
            let expect = t.powi(n as i32);
            assert!(
                (v.value - expect).norm() <= 1e-9 * expect.abs().max(1e-12),
                "k={k} n={n}: {} vs {expect}",
                v.value
            );
        }
        // zero function
        let z = |_u: C64| C64::new(0.0, 0.0);
        let v = laplace_ray(&z, 2, 0.0, C64::new(0.1, 0.0), &q).unwrap();
        assert_eq!(v.value, C64::new(0.0, 0.0));
    }

    #[test]
    fn laplace_linearity() {
        let q = QuadratureSpec::with_r_cut(0.5);
        let f1 = |u: C64| u * u;
        let f2 = |u: C64| u * u * u;
        let (a, b) = (C64::new(1.3, -0.4), C64::new(-0.2, 0.9));
        let comb = move |u: C64| f1(u) * a + f2(u) * b;
        let t = C64::new(0.08, 0.02);
        let v1 = laplace_ray(&f1, 2, 0.0, t, &q).unwrap().value;
        let v2 = laplace_ray(&f2, 2, 0.0, t, &q).unwrap().value;
        let vc = laplace_ray(&comb, 2, 0.0, t, &q).unwrap().value;
        assert!((vc - (v1 * a + v2 * b)).norm() <= 1e-12 * vc.norm().max(1e-15));
    }

    #[test]
    fn laplace_direction_constraint() {
        let q = QuadratureSpec::with_r_cut(0.5);
        let f = |u: C64| u;
        // k=2, gamma - argT = pi/2 gives cos(pi) = -1
        let r = laplace_ray(&f, 2, std::f64::consts::FRAC_PI_2, C64::new(0.1, 0.0), &q);
        assert!(matches!(r, Err(Error::InvalidDirection { .. })));
    }

    #[test]
    fn laplace_direction_independence_on_polynomials() {
        let q = QuadratureSpec::with_r_cut(0.5);
        let f = |u: C64| u * u + u * C64::new(0.3, 0.1);
        let t = C64::new(0.05, 0.01);
        let v0 = laplace_ray(&f, 2, t.arg(), t, &q).unwrap().value;
        let v1 = laplace_ray(&f, 2, t.arg() + 0.3, t, &q).unwrap().value;
        let v2 = laplace_ray(&f, 2, t.arg() - 0.25, t, &q).unwrap().value;
        assert!((v0 - v1).norm() <= 1e-8 * v0.norm());
        assert!((v0 - v2).norm() <= 1e-8 * v0.norm());
    }

    #[test]
    fn gevrey_fit_recovers_orders() {
        for k in [1.0f64, 2.0, 3.0] {
            let a: Vec<f64> = (1..=40).map(|n| gamma_pos(1.0 + n as f64 / k)).collect();
            let fit = gevrey_fit(&a).unwrap();
            assert!((fit.k_est - k).abs() <= 0.1 * k, "k={k}: got {}", fit.k_est);
        }
        // factorial sequence is order 1
        let a: Vec<f64> = (1..=30).map(|n| gamma_pos(1.0 + n as f64)).collect();
        let fit = gevrey_fit(&a).unwrap();
        assert!((fit.k_est - 1.0).abs() <= 0.1, "{}", fit.k_est);
        // constant sequence flags convergent-type
        let fit = gevrey_fit(&vec![1.0; 20]).unwrap();
        assert!(fit.k_est.is_infinite());
        assert_eq!(fit.note, "convergent-type");
        // error paths
        assert!(gevrey_fit(&[1.0; 5]).is_err());
        assert!(gevrey_fit(&[1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn decay_fit_recovers_levels() {
        let eps: Vec<f64> = (0..12).map(|i| 0.2 * 10f64.powf(i as f64 / 10.0)).collect();
        let samples: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 3.0 * (-2.0 / (e * e)).exp())).collect();
        let fit = decay_fit(&samples).unwrap();
        assert!((fit.k_est - 2.0).abs() <= 0.1, "{}", fit.k_est);
        assert!((fit.m - 2.0).abs() <= 0.1, "{}", fit.m);
        assert!((fit.k_amp - 3.0).abs() <= 0.15, "{}", fit.k_amp);
        // constant differences are flagged
        let flat: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 0.7)).collect();
        let fit = decay_fit(&flat).unwrap();
        assert_eq!(fit.k_est, 0.0);
        assert_eq!(fit.note, "non-decaying");
        // two-level mixture at small eps classifies to the slower level
        let mixed: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| (e, (-2.0 / (e * e)).exp() + 0.5 * (-1.0 / (e * e * e)).exp()))
            .collect();
        let fit = decay_fit(&mixed).unwrap();
        assert!((fit.k_est - 2.0).abs() <= 0.3, "{}", fit.k_est);
        // error paths
        assert!(decay_fit(&samples[..4]).is_err());
        let narrow: Vec<(f64, f64)> = (0..6).map(|i| (0.1 + 0.01 * i as f64, 0.5)).collect();
        assert!(decay_fit(&narrow).is_err());
    }

    #[test]
    fn classification_on_2x3_ring() {
        let inst = inst_a();
        let g = ModeGrid::new(8.0, 65).unwrap();
        let cov = build_good_covering(
            &inst,
            2,
            3,
            inst.space.eps0,
            70f64.to_radians(),
            default_time_sector(),
            default_time_sector(),
            &g,
        )
        .unwrap();
        let cls = classify_pairs(&cov);
        // ring order: (0,0),(0,1),(0,2),(1,0),(1,1),(1,2); adjacency wraps
        let expect_uk2 = [((0, 0), (0, 1)), ((0, 1), (0, 2)), ((1, 0), (1, 1)), ((1, 1), (1, 2))];
        let expect_uk1 = [((0, 2), (1, 0)), ((0, 0), (1, 2))];
        assert_eq!(cls.uk2.len(), expect_uk2.len());
        for p in expect_uk2 {
            assert!(cls.uk2.contains(&p), "{p:?} missing from Uk2: {:?}", cls.uk2);
        }
        assert_eq!(cls.uk1.len(), expect_uk1.len());
        for p in expect_uk1 {
            assert!(cls.uk1.contains(&p), "{p:?} missing from Uk1: {:?}", cls.uk1);
        }
        assert_eq!(cls.u0.len(), 15 - 6);
        // symmetry and relabel stability
        for (a, b) in cls.uk2.iter().chain(&cls.uk1).chain(&cls.u0) {
            assert_eq!(classify_pair(&cov, *a, *b), classify_pair(&cov, *b, *a));
        }
    }
}
