//! Truncated bivariate power series with mode-function coefficients and the
//! formal-solution recursion by direct coefficient matching.
//!
//! Tables hold entries U_{n1,n2} for 1 <= nj <= Nj; the zero boundary rows
//! forced by the null initial data are not stored. The forcing table is
//! aligned so that F_{n1,n2} enters the equation at matching order
//! (n1-1, n2-1), i.e. it directly forces U_{n1,n2}.

use crate::error::{Error, Result};
use crate::instance::{generate_coefficients, CoeffKind, PolySpec, ProblemInstance};
use crate::mode_space::{star_product, ModeFunction, ModeGrid};
use crate::special::falling;
use crate::C64;
use rayon::prelude::*;
use std::io::{BufRead, Write};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    pub n1_max: usize,
    pub n2_max: usize,
    pub epsilon: C64,
    pub grid: Arc<ModeGrid>,
    entries: Vec<ModeFunction>,
}

impl CoeffTable {
    pub fn zero(n1_max: usize, n2_max: usize, epsilon: C64, grid: Arc<ModeGrid>) -> Self {
        let entries = vec![ModeFunction::zero(grid.clone()); n1_max * n2_max];
        CoeffTable { n1_max, n2_max, epsilon, grid, entries }
    }

    #[inline]
    fn idx(&self, n1: usize, n2: usize) -> usize {
        debug_assert!((1..=self.n1_max).contains(&n1) && (1..=self.n2_max).contains(&n2));
        (n1 - 1) * self.n2_max + (n2 - 1)
    }

    pub fn entry(&self, n1: usize, n2: usize) -> &ModeFunction {
        &self.entries[self.idx(n1, n2)]
    }

    /// Entry by signed index; zero outside 1..=Nj.
    pub fn entry_or_zero(&self, n1: i64, n2: i64) -> Option<&ModeFunction> {
        if n1 >= 1 && n2 >= 1 && n1 <= self.n1_max as i64 && n2 <= self.n2_max as i64 {
            Some(&self.entries[(n1 as usize - 1) * self.n2_max + (n2 as usize - 1)])
        } else {
            None
        }
    }

    pub fn set_entry(&mut self, n1: usize, n2: usize, f: ModeFunction) {
        let i = self.idx(n1, n2);
        self.entries[i] = f;
    }

    pub fn iter_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n2 = self.n2_max;
        (1..=self.n1_max).flat_map(move |a| (1..=n2).map(move |b| (a, b)))
    }

    pub fn same_shape(&self, other: &CoeffTable) -> bool {
        self.n1_max == other.n1_max
            && self.n2_max == other.n2_max
            && self.grid == other.grid
            && self.epsilon == other.epsilon
    }

    /// Restriction to a smaller truncation.
    pub fn restrict(&self, n1_max: usize, n2_max: usize) -> CoeffTable {
        assert!(n1_max <= self.n1_max && n2_max <= self.n2_max);
        let mut out = CoeffTable::zero(n1_max, n2_max, self.epsilon, self.grid.clone());
        for n1 in 1..=n1_max {
            for n2 in 1..=n2_max {
                out.set_entry(n1, n2, self.entry(n1, n2).clone());
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.max_abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CoeffTable) -> f64 {
        assert!(self.same_shape(other));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                a.values
                    .iter()
                    .zip(&b.values)
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Bivariate Cauchy product in the time variables combined with the kernel
/// convolution in m:
///
/// entry (n1, n2) = (2π)^{-1/2} Σ_{a1+b1=n1, a2+b2=n2}
///                  star(A_{a1,a2}, B_{b1,b2}; P1(·,eps), P2(·,eps), 1/b)
pub fn cauchy_star(
    a: &CoeffTable,
    b: &CoeffTable,
    p1: &PolySpec,
    p2: &PolySpec,
    divisor: &PolySpec,
) -> Result<CoeffTable> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("cauchy_star tables differ".into()));
    }
    let eps = a.epsilon;
    let scale = C64::new(1.0 / (2.0 * std::f64::consts::PI).sqrt(), 0.0);
    let mut out = CoeffTable::zero(a.n1_max, a.n2_max, eps, a.grid.clone());
    let results: Vec<(usize, usize, Result<ModeFunction>)> = out
        .iter_indices()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(n1, n2)| {
            let r = partial_cauchy_star(a, b, p1, p2, divisor, n1, n2).map(|f| f.scale(scale));
            (n1, n2, r)
        })
        .collect();
    for (n1, n2, r) in results {
        out.set_entry(n1, n2, r?);
    }
    Ok(out)
}

/// Unscaled coefficient of the Cauchy star product at total power (n1, n2).
fn partial_cauchy_star(
    a: &CoeffTable,
    b: &CoeffTable,
    p1: &PolySpec,
    p2: &PolySpec,
    divisor: &PolySpec,
    n1: usize,
    n2: usize,
) -> Result<ModeFunction> {
    let eps = a.epsilon;
    let q1 = |m: f64| p1.eval_im(m, eps);
    let q2 = |m: f64| p2.eval_im(m, eps);
    let rr = |m: f64| divisor.eval_im(m, eps);
    let mut acc = ModeFunction::zero(a.grid.clone());
    for a1 in 1..n1 {
        let b1 = n1 - a1;
        for a2 in 1..n2 {
            let b2 = n2 - a2;
            let fa = a.entry(a1, a2);
            let fb = b.entry(b1, b2);
            if fa.is_zero() || fb.is_zero() {
                continue;
            }
            let s = star_product(fa, fb, &q1, &q2, &rr)?;
            acc.add_assign_scaled(&s, C64::new(1.0, 0.0));
        }
    }
    Ok(acc)
}

/// Single-coefficient extraction of the monomial-times-derivative action:
/// the coefficient of T1^a T2^b in R(im) T1^{d1} ∂^{δ1} T2^{d2} ∂^{δ2} U,
/// which is R(im)·fall(q1, δ1)·fall(q2, δ2)·U_{q1,q2} with qj = a + δj - dj.
fn linear_term_coeff(
    u: &CoeffTable,
    a: i64,
    b: i64,
    d1: i64,
    delta1: u32,
    d2: i64,
    delta2: u32,
    r: &PolySpec,
) -> Option<(f64, ModeFunction)> {
    let q1 = a + delta1 as i64 - d1;
    let q2 = b + delta2 as i64 - d2;
    let src = u.entry_or_zero(q1, q2)?;
    let w = falling(q1, delta1) * falling(q2, delta2);
    if w == 0.0 || src.is_zero() {
        return None;
    }
    let eps = u.epsilon;
    Some((w, src.map_with_m(|m, v| v * r.eval_im(m, eps))))
}

/// Monomial-times-derivative action on a whole table. Output entry (n1, n2)
/// is the series coefficient at power (n1, n2); contributions that would land
/// at power zero are outside the stored range and dropped.
pub fn apply_linear_term(
    u: &CoeffTable,
    d1: i64,
    delta1: u32,
    d2: i64,
    delta2: u32,
    r: &PolySpec,
) -> CoeffTable {
    let mut out = CoeffTable::zero(u.n1_max, u.n2_max, u.epsilon, u.grid.clone());
    for (n1, n2) in u.iter_indices() {
        if let Some((w, f)) = linear_term_coeff(u, n1 as i64, n2 as i64, d1, delta1, d2, delta2, r) {
            out.set_entry(n1, n2, f.scale(C64::new(w, 0.0)));
        }
    }
    out
}

/// The generated coefficient family C_{n1,n2} (0-indexed) and the forcing
/// family F_{n1,n2} (1-indexed) materialized for a truncation.
pub struct GeneratedData {
    /// c[n1][n2] = C_{n1,n2} for 0 <= nj <= Nj
    pub c: Vec<Vec<ModeFunction>>,
    /// f[n1-1][n2-1] = F_{n1,n2} for 1 <= nj <= Nj
    pub f: Vec<Vec<ModeFunction>>,
}

pub fn generated_data(
    inst: &ProblemInstance,
    n1_max: usize,
    n2_max: usize,
    grid: &Arc<ModeGrid>,
) -> GeneratedData {
    let c = (0..=n1_max)
        .map(|a| {
            (0..=n2_max)
                .map(|b| {
                    generate_coefficients(&inst.gen, &inst.space, CoeffKind::C, a as u32, b as u32, grid)
                })
                .collect()
        })
        .collect();
    let f = (1..=n1_max)
        .map(|a| {
            (1..=n2_max)
                .map(|b| {
                    generate_coefficients(&inst.gen, &inst.space, CoeffKind::F, a as u32, b as u32, grid)
                })
                .collect()
        })
        .collect();
    GeneratedData { c, f }
}

struct Recursion<'a> {
    inst: &'a ProblemInstance,
    eps: C64,
    grid: Arc<ModeGrid>,
    data: &'a GeneratedData,
    e1: i64,
    e2: i64,
    delta_d1: u32,
    delta_d2: u32,
    sigma1: i64,
    sigma2: i64,
}

impl<'a> Recursion<'a> {
    fn new(
        inst: &'a ProblemInstance,
        eps: C64,
        grid: Arc<ModeGrid>,
        data: &'a GeneratedData,
    ) -> Self {
        let ex = &inst.exponents;
        let (k1, k2) = (ex.k1 as i64, ex.k2 as i64);
        let delta_d1 = ex.delta[ex.d1 - 1] as u32;
        let delta_d2 = ex.deltat[ex.d2 - 1] as u32;
        let e1 = (delta_d1 as i64 - 1) * (k1 + 1);
        let e2 = (delta_d2 as i64 - 1) * (k2 + 1);
        let sigma1 = delta_d1 as i64 - e1;
        let sigma2 = delta_d2 as i64 - e2;
        Recursion { inst, eps, grid, data, e1, e2, delta_d1, delta_d2, sigma1, sigma2 }
    }

    /// Divisor of the unknown U_{t1,t2} per mode node; the top-order terms
    /// join it exactly when their source index coincides with the target.
    fn divisor(&self, t1: usize, t2: usize, m: f64) -> C64 {
        let p = &self.inst.polys;
        let q1 = p.q1.eval_im(m, self.eps);
        let q2 = p.q2.eval_im(m, self.eps);
        let t1f = t1 as f64;
        let t2f = t2 as f64;
        let mut c = q1 * q2 * t1f * t2f;
        if self.sigma1 == 1 {
            c -= q2 * p.rd1.eval_im(m, self.eps) * t2f * falling(t1 as i64, self.delta_d1);
        }
        if self.sigma2 == 1 {
            c -= q1 * p.rd2.eval_im(m, self.eps) * t1f * falling(t2 as i64, self.delta_d2);
        }
        if self.sigma1 == 1 && self.sigma2 == 1 {
            c += p.rd1.eval_im(m, self.eps)
                * p.rd2.eval_im(m, self.eps)
                * falling(t1 as i64, self.delta_d1)
                * falling(t2 as i64, self.delta_d2);
        }
        c
    }

    /// Everything on the right of the matching at order (a, b) = (t1-1, t2-1),
    /// including top-order sources that did not coincide with the unknown.
    fn numerator(&self, u: &CoeffTable, t1: usize, t2: usize) -> Result<ModeFunction> {
        let p = &self.inst.polys;
        let ex = &self.inst.exponents;
        let eps = self.eps;
        let (a, b) = (t1 as i64 - 1, t2 as i64 - 1);
        let mut acc = ModeFunction::zero(self.grid.clone());

        // top-order cross terms moved from the left-hand side
        if self.sigma1 != 1 {
            let q2rd1 = p.q2.product(&p.rd1);
            if let Some((w, f)) = linear_term_coeff(u, a, b, self.e1, self.delta_d1, 0, 1, &q2rd1) {
                acc.add_assign_scaled(&f, C64::new(w, 0.0));
            }
        }
        if self.sigma2 != 1 {
            let q1rd2 = p.q1.product(&p.rd2);
            if let Some((w, f)) = linear_term_coeff(u, a, b, 0, 1, self.e2, self.delta_d2, &q1rd2) {
                acc.add_assign_scaled(&f, C64::new(w, 0.0));
            }
        }
        if !(self.sigma1 == 1 && self.sigma2 == 1) {
            let rr = p.rd1.product(&p.rd2);
            // an axis whose shift coincides with the target keeps the target
            // index there (its partner landed in the divisor)
            let (i1, w1) = if self.sigma1 == 1 {
                (t1 as i64, falling(t1 as i64, self.delta_d1))
            } else {
                let q1 = a + self.delta_d1 as i64 - self.e1;
                (q1, falling(q1, self.delta_d1))
            };
            let (i2, w2) = if self.sigma2 == 1 {
                (t2 as i64, falling(t2 as i64, self.delta_d2))
            } else {
                let q2 = b + self.delta_d2 as i64 - self.e2;
                (q2, falling(q2, self.delta_d2))
            };
            if let Some(src) = u.entry_or_zero(i1, i2) {
                let w = w1 * w2;
                if w != 0.0 && !src.is_zero() {
                    let f = src.map_with_m(|m, v| v * rr.eval_im(m, eps));
                    acc.add_assign_scaled(&f, C64::new(-w, 0.0));
                }
            }
        }

        let inv_eps2 = eps.powi(-2);
        let sqrt2pi = (2.0 * std::f64::consts::PI).sqrt();

        // quadratic term at matching order (a, b)
        if a >= 2 && b >= 2 && !p.p1.is_zero() && !p.p2.is_zero() {
            let one = PolySpec::constant(1.0);
            let nl = partial_cauchy_star(u, u, &p.p1, &p.p2, &one, a as usize, b as usize)?;
            acc.add_assign_scaled(&nl, inv_eps2 / sqrt2pi);
        }

        // inner linear sum
        for l1 in 1..ex.d1 {
            for l2 in 1..ex.d2 {
                let rl = &p.r[l1 - 1][l2 - 1];
                if rl.is_zero() {
                    continue;
                }
                let (dl, sl) = (ex.d[l1 - 1], ex.delta[l1 - 1] as u32);
                let (dtl, stl) = (ex.dt[l2 - 1], ex.deltat[l2 - 1] as u32);
                let q1i = a + sl as i64 - dl;
                let q2i = b + stl as i64 - dtl;
                if q1i > t1 as i64 || q2i > t2 as i64 || (q1i == t1 as i64 && q2i == t2 as i64) {
                    return Err(Error::IllFounded { s1: q1i, s2: q2i, t1, t2 });
                }
                if let Some((w, f)) = linear_term_coeff(u, a, b, dl, sl, dtl, stl, rl) {
                    let pw = ex.big_delta[l1 - 1][l2 - 1] - dl - dtl + sl as i64 + stl as i64 - 2;
                    acc.add_assign_scaled(&f, eps.powi(pw as i32) * w);
                }
            }
        }

        // coefficient family convolved against lower-order entries
        if a >= 1 && b >= 1 {
            let one = |m: f64| {
                let _ = m;
                C64::new(1.0, 0.0)
            };
            let r0 = |m: f64| p.r0.eval_im(m, eps);
            let mut csum = ModeFunction::zero(self.grid.clone());
            let mut any = false;
            for a1 in 0..a {
                let a2 = a - a1;
                for b1 in 0..b {
                    let b2 = b - b1;
                    let cf = &self.data.c[a1 as usize][b1 as usize];
                    if cf.is_zero() {
                        continue;
                    }
                    if let Some(uf) = u.entry_or_zero(a2, b2) {
                        if uf.is_zero() {
                            continue;
                        }
                        let s = star_product(cf, uf, &one, &r0, &one)?;
                        csum.add_assign_scaled(&s, C64::new(1.0, 0.0));
                        any = true;
                    }
                }
            }
            if any {
                acc.add_assign_scaled(&csum, inv_eps2 / sqrt2pi);
            }
        }

        // forcing
        let ff = &self.data.f[t1 - 1][t2 - 1];
        if !ff.is_zero() {
            acc.add_assign_scaled(ff, inv_eps2);
        }
        Ok(acc)
    }
}

/// Solves the coefficient recursion by graded matching. Processes targets in
/// ascending t1+t2 (then t1), divides each matching by the per-node divisor
/// and reports a resonant index when that divisor vanishes on the grid.
pub fn solve_recursion(
    inst: &ProblemInstance,
    eps: C64,
    n1_max: usize,
    n2_max: usize,
    grid: &Arc<ModeGrid>,
) -> Result<CoeffTable> {
    let data = generated_data(inst, n1_max, n2_max, grid);
    solve_recursion_with(inst, eps, n1_max, n2_max, grid, &data)
}

pub fn solve_recursion_with(
    inst: &ProblemInstance,
    eps: C64,
    n1_max: usize,
    n2_max: usize,
    grid: &Arc<ModeGrid>,
    data: &GeneratedData,
) -> Result<CoeffTable> {
    if eps.norm() == 0.0 {
        return Err(Error::InvalidInstance("epsilon must be nonzero".into()));
    }
    let rec = Recursion::new(inst, eps, grid.clone(), data);
    let mut table = CoeffTable::zero(n1_max, n2_max, eps, grid.clone());
    for s in 2..=(n1_max + n2_max) {
        let t1_lo = 1.max(s.saturating_sub(n2_max));
        let t1_hi = n1_max.min(s - 1);
        if t1_lo > t1_hi {
            continue;
        }
        let level: Vec<(usize, usize)> = (t1_lo..=t1_hi).map(|t1| (t1, s - t1)).collect();
        let solved: Vec<(usize, usize, Result<ModeFunction>)> = level
            .into_par_iter()
            .map(|(t1, t2)| {
                let r = rec.numerator(&table, t1, t2).and_then(|num| {
                    let mut vals = Vec::with_capacity(grid.n_points);
                    for (i, &m) in grid.nodes().iter().enumerate() {
                        let c = rec.divisor(t1, t2, m);
                        if c.norm() < 1e-300 {
                            return Err(Error::ResonantIndex { n1: t1, n2: t2, m });
                        }
                        vals.push(num.values[i] / c);
                    }
                    Ok(ModeFunction { grid: grid.clone(), values: vals })
                });
                (t1, t2, r)
            })
            .collect();
        for (t1, t2, r) in solved {
            table.set_entry(t1, t2, r?);
        }
    }
    Ok(table)
}

/// Maximum relative residual of the matching equations over orders
/// (a, b) <= (a_max, b_max). This is a direct transliteration of the
/// equation: the four factored operator terms on the left, the quadratic,
/// inner-linear, coefficient and forcing terms on the right, with no divisor
/// or term-moving logic shared with the solver.
pub fn recursion_residual(
    inst: &ProblemInstance,
    u: &CoeffTable,
    data: &GeneratedData,
    a_max: usize,
    b_max: usize,
) -> Result<f64> {
    let eps = u.epsilon;
    let ex = &inst.exponents;
    let p = &inst.polys;
    let (k1, k2) = (ex.k1 as i64, ex.k2 as i64);
    let dd1 = ex.delta[ex.d1 - 1] as u32;
    let dd2 = ex.deltat[ex.d2 - 1] as u32;
    let e1 = (dd1 as i64 - 1) * (k1 + 1);
    let e2 = (dd2 as i64 - 1) * (k2 + 1);
    let q1q2 = p.q1.product(&p.q2);
    let q2rd1 = p.q2.product(&p.rd1);
    let q1rd2 = p.q1.product(&p.rd2);
    let rd12 = p.rd1.product(&p.rd2);
    let one = PolySpec::constant(1.0);
    let nonlin = if p.p1.is_zero() || p.p2.is_zero() {
        None
    } else {
        Some(cauchy_star(u, u, &p.p1, &p.p2, &one)?)
    };
    let inv_eps2 = eps.powi(-2);
    let sqrt2pi = (2.0 * std::f64::consts::PI).sqrt();
    let term = |a: i64, b: i64, d1: i64, s1: u32, d2: i64, s2: u32, r: &PolySpec| -> Option<ModeFunction> {
        linear_term_coeff(u, a, b, d1, s1, d2, s2, r).map(|(w, f)| f.scale(C64::new(w, 0.0)))
    };
    let mut worst: f64 = 0.0;
    for a in 0..=a_max.min(u.n1_max - 1) as i64 {
        for b in 0..=b_max.min(u.n2_max - 1) as i64 {
            let mut terms: Vec<ModeFunction> = Vec::new();
            let mut rhs_terms: Vec<ModeFunction> = Vec::new();
            if let Some(f) = term(a, b, 0, 1, 0, 1, &q1q2) {
                terms.push(f);
            }
            if let Some(f) = term(a, b, e1, dd1, 0, 1, &q2rd1) {
                terms.push(f.scale(C64::new(-1.0, 0.0)));
            }
            if let Some(f) = term(a, b, 0, 1, e2, dd2, &q1rd2) {
                terms.push(f.scale(C64::new(-1.0, 0.0)));
            }
            if let Some(f) = term(a, b, e1, dd1, e2, dd2, &rd12) {
                terms.push(f);
            }
            if let Some(nl) = &nonlin {
                if let Some(f) = nl.entry_or_zero(a, b) {
                    rhs_terms.push(f.scale(inv_eps2));
                }
            }
            for l1 in 1..ex.d1 {
                for l2 in 1..ex.d2 {
                    let rl = &p.r[l1 - 1][l2 - 1];
                    if rl.is_zero() {
                        continue;
                    }
                    let (dl, sl) = (ex.d[l1 - 1], ex.delta[l1 - 1] as u32);
                    let (dtl, stl) = (ex.dt[l2 - 1], ex.deltat[l2 - 1] as u32);
                    if let Some(f) = term(a, b, dl, sl, dtl, stl, rl) {
                        let pw = ex.big_delta[l1 - 1][l2 - 1] - dl - dtl + sl as i64 + stl as i64 - 2;
                        rhs_terms.push(f.scale(eps.powi(pw as i32)));
                    }
                }
            }
            if a >= 1 && b >= 1 {
                let onef = |_m: f64| C64::new(1.0, 0.0);
                let r0f = |m: f64| p.r0.eval_im(m, eps);
                for a1 in 0..a {
                    for b1 in 0..b {
                        let cf = &data.c[a1 as usize][b1 as usize];
                        if cf.is_zero() {
                            continue;
                        }
                        if let Some(uf) = u.entry_or_zero(a - a1, b - b1) {
                            if !uf.is_zero() {
                                let s = star_product(cf, uf, &onef, &r0f, &onef)?;
                                rhs_terms.push(s.scale(inv_eps2 / sqrt2pi));
                            }
                        }
                    }
                }
            }
            {
                let ff = &data.f[a as usize][b as usize];
                if !ff.is_zero() {
                    rhs_terms.push(ff.scale(inv_eps2));
                }
            }
            for i in 0..u.grid.n_points {
                let mut resid = C64::new(0.0, 0.0);
                let mut scale: f64 = 1e-30;
                for t in &terms {
                    resid += t.values[i];
                    scale = scale.max(t.values[i].norm());
                }
                for t in &rhs_terms {
                    resid -= t.values[i];
                    scale = scale.max(t.values[i].norm());
                }
                worst = worst.max(resid.norm() / scale);
            }
        }
    }
    Ok(worst)
}

/// Writes a table as CSV with columns n1, n2, m, re, im; entries ordered by
/// (n1, n2, m). `header_ks` adds the transform-order header line used by the
/// Borel-plane variant.
pub fn write_table_csv<W: Write>(w: &mut W, t: &CoeffTable, header_ks: Option<(u32, u32)>) -> Result<()> {
    if let Some((k1, k2)) = header_ks {
        writeln!(w, "# k1={k1} k2={k2}")?;
    }
    writeln!(w, "n1,n2,m,re,im")?;
    for (n1, n2) in t.iter_indices() {
        let f = t.entry(n1, n2);
        for (m, v) in t.grid.nodes().iter().zip(&f.values) {
            writeln!(
                w,
                "{n1},{n2},{},{},{}",
                crate::fmt_f64(*m),
                crate::fmt_f64(v.re),
                crate::fmt_f64(v.im)
            )?;
        }
    }
    Ok(())
}

/// Reads a table written by [`write_table_csv`]; returns the table and the
/// transform orders if the header line carried them.
pub fn read_table_csv<R: BufRead>(r: R, epsilon: C64) -> Result<(CoeffTable, Option<(u32, u32)>)> {
    let mut ks = None;
    let mut rows: Vec<(usize, usize, f64, C64)> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let mut k1 = None;
            let mut k2 = None;
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("k1=") {
                    k1 = v.parse::<u32>().ok();
                }
                if let Some(v) = tok.strip_prefix("k2=") {
                    k2 = v.parse::<u32>().ok();
                }
            }
            if let (Some(a), Some(b)) = (k1, k2) {
                ks = Some((a, b));
            }
            continue;
        }
        if t.starts_with("n1") {
            continue;
        }
        let mut it = t.split(',');
        let mut field = |what: &str| -> Result<&str> {
            it.next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing {what}", lineno + 1)))
        };
        let n1: usize = field("n1")?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let n2: usize = field("n2")?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let m: f64 = field("m")?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let re: f64 = field("re")?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let im: f64 = field("im")?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if n1 == 0 || n2 == 0 || n1 > 4096 || n2 > 4096 || !m.is_finite() || !re.is_finite() || !im.is_finite() {
            return Err(Error::Parse(format!("line {}: row out of range", lineno + 1)));
        }
        rows.push((n1, n2, m, C64::new(re, im)));
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty table CSV".into()));
    }
    let n1_max = rows.iter().map(|r| r.0).max().unwrap();
    let n2_max = rows.iter().map(|r| r.1).max().unwrap();
    let per_entry = rows.len() / (n1_max * n2_max);
    if per_entry < 3 || per_entry % 2 == 0 || rows.len() != n1_max * n2_max * per_entry {
        return Err(Error::Parse("table CSV is not a full grid".into()));
    }
    let ms: Vec<f64> = rows[..per_entry].iter().map(|r| r.2).collect();
    let m_max = ms[per_entry - 1];
    if !(m_max > 0.0) {
        return Err(Error::Parse("table CSV grid malformed".into()));
    }
    let grid = ModeGrid::new(m_max, per_entry)?;
    let mut table = CoeffTable::zero(n1_max, n2_max, epsilon, grid.clone());
    for chunk in rows.chunks(per_entry) {
        let (n1, n2) = (chunk[0].0, chunk[0].1);
        let mut vals = Vec::with_capacity(per_entry);
        for (i, row) in chunk.iter().enumerate() {
            if row.0 != n1 || row.1 != n2 || (row.2 - grid.nodes()[i]).abs() > 1e-9 * m_max.max(1.0) {
                return Err(Error::Parse("table CSV rows out of order".into()));
            }
            vals.push(row.3);
        }
        table.set_entry(n1, n2, ModeFunction { grid: grid.clone(), values: vals });
    }
    Ok((table, ks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::examples::{inst_a, inst_a0, inst_b};

    fn grid() -> Arc<ModeGrid> {
        ModeGrid::new(8.0, 65).unwrap()
    }

    fn eps() -> C64 {
        C64::new(0.05, 0.0)
    }

    #[test]
    fn first_coefficient_is_forcing_over_kernel() {
        let inst = inst_a0();
        let g = grid();
        let u = solve_recursion(&inst, eps(), 4, 4, &g).unwrap();
        let data = generated_data(&inst, 4, 4, &g);
        let f11 = &data.f[0][0];
        let inv_eps2 = eps().powi(-2);
        for (i, &m) in g.nodes().iter().enumerate() {
            let q1 = inst.polys.q1.eval_im(m, eps());
            let q2 = inst.polys.q2.eval_im(m, eps());
            let expect = inv_eps2 * f11.values[i] / (q1 * q2);
            let got = u.entry(1, 1).values[i];
            assert!((got - expect).norm() <= 1e-12 * expect.norm().max(1e-30), "m={m}");
        }
    }

    #[test]
    fn order_two_one_coefficient() {
        // With only F_{2,1} forced, U_{2,1} = eps^{-2} F_{2,1} / (2 Q1 Q2):
        // the top-order terms cannot reach matching order (1,0).
        let mut inst = inst_a0();
        inst.gen.f_mask = vec![(2, 1)];
        let g = grid();
        let u = solve_recursion(&inst, eps(), 4, 4, &g).unwrap();
        let data = generated_data(&inst, 4, 4, &g);
        let f21 = &data.f[1][0];
        let inv_eps2 = eps().powi(-2);
        for (i, &m) in g.nodes().iter().enumerate() {
            let q1 = inst.polys.q1.eval_im(m, eps());
            let q2 = inst.polys.q2.eval_im(m, eps());
            let expect = inv_eps2 * f21.values[i] / (q1 * q2 * 2.0);
            let got = u.entry(2, 1).values[i];
            assert!((got - expect).norm() <= 1e-12 * expect.norm().max(1e-30), "m={m}");
        }
        assert!(u.entry(1, 1).is_zero());
    }

    #[test]
    fn zero_data_zero_solution() {
        let mut inst = inst_a();
        inst.gen.c_mask.clear();
        inst.gen.f_mask.clear();
        let u = solve_recursion(&inst, eps(), 5, 5, &grid()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn residual_small_for_solved_tables() {
        for inst in [inst_a(), inst_a0(), inst_b()] {
            let g = grid();
            let u = solve_recursion(&inst, eps(), 6, 6, &g).unwrap();
            let data = generated_data(&inst, 6, 6, &g);
            let r = recursion_residual(&inst, &u, &data, 5, 5).unwrap();
            assert!(r <= 1e-10, "residual {r}");
        }
    }

    #[test]
    fn truncation_stability_bitwise() {
        let inst = inst_a();
        let g = grid();
        let big = solve_recursion(&inst, eps(), 8, 7, &g).unwrap();
        let small = solve_recursion(&inst, eps(), 6, 5, &g).unwrap();
        assert_eq!(big.restrict(6, 5), small);
    }

    #[test]
    fn linear_in_forcing_when_kernel_zeroed() {
        let mut inst = inst_a();
        inst.polys.p1 = PolySpec::default();
        inst.polys.p2 = PolySpec::default();
        let g = grid();
        let data = generated_data(&inst, 5, 5, &g);
        let u1 = solve_recursion_with(&inst, eps(), 5, 5, &g, &data).unwrap();
        // doubling only the forcing table doubles the solution
        let mut data2 = generated_data(&inst, 5, 5, &g);
        for row in &mut data2.f {
            for f in row {
                *f = f.scale(C64::new(2.0, 0.0));
            }
        }
        let u2 = solve_recursion_with(&inst, eps(), 5, 5, &g, &data2).unwrap();
        for (n1, n2) in u1.iter_indices() {
            let a = u1.entry(n1, n2);
            let b = u2.entry(n1, n2);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((y - x * 2.0).norm() <= 1e-12 * y.norm().max(1e-30));
            }
        }
    }

    #[test]
    fn resonant_index_reported_for_kernel_zero() {
        // Q1 = 1 + X^2 vanishes at m = ±1 (grid nodes): division impossible.
        let mut inst = inst_a0();
        inst.polys.q1 = PolySpec::from_real(&[1.0, 0.0, 1.0]);
        match solve_recursion(&inst, eps(), 3, 3, &grid()) {
            Err(Error::ResonantIndex { n1: 1, n2: 1, m }) => assert!((m.abs() - 1.0).abs() < 1e-12),
            other => panic!("expected ResonantIndex, got {other:?}"),
        }
    }

    #[test]
    fn ill_founded_reported_for_bad_inner_orders() {
        // inner d_2 smaller than delta_2 pushes the source past the target
        let mut inst = inst_b();
        inst.exponents.d[1] = 0;
        match solve_recursion(&inst, eps(), 4, 4, &grid()) {
            Err(Error::IllFounded { .. }) => {}
            other => panic!("expected IllFounded, got {other:?}"),
        }
    }

    #[test]
    fn cauchy_star_single_entries() {
        let g = grid();
        let mut a = CoeffTable::zero(4, 4, eps(), g.clone());
        let f = ModeFunction::from_fn(g.clone(), |m| C64::new((-m * m).exp(), 0.0));
        a.set_entry(1, 1, f);
        let one = PolySpec::constant(1.0);
        let p = cauchy_star(&a, &a, &one, &one, &one).unwrap();
        for (n1, n2) in p.iter_indices() {
            if (n1, n2) != (2, 2) {
                assert!(p.entry(n1, n2).is_zero(), "unexpected entry at ({n1},{n2})");
            }
        }
        assert!(!p.entry(2, 2).is_zero());
        // zero second factor
        let z = CoeffTable::zero(4, 4, eps(), g);
        let pz = cauchy_star(&a, &z, &one, &one, &one).unwrap();
        assert_eq!(pz.max_abs(), 0.0);
    }

    #[test]
    fn cauchy_star_commutes_for_symmetric_kernel() {
        let inst = inst_a();
        let g = grid();
        let u = solve_recursion(&inst, eps(), 4, 4, &g).unwrap();
        let one = PolySpec::constant(1.0);
        let p = inst.polys.p1.clone();
        let ab = cauchy_star(&u, &u, &p, &p, &one).unwrap();
        let ba = cauchy_star(&u, &u, &p, &p, &one).unwrap();
        assert!(ab.max_abs_diff(&ba) <= 1e-12 * ab.max_abs().max(1e-30));
    }

    #[test]
    fn linear_term_examples() {
        let g = grid();
        let mut a = CoeffTable::zero(5, 5, eps(), g.clone());
        let f = ModeFunction::from_fn(g.clone(), |m| C64::new((-m.abs()).exp(), 0.0));
        a.set_entry(2, 1, f.clone());
        let one = PolySpec::constant(1.0);
        // identity
        let id = apply_linear_term(&a, 0, 0, 0, 0, &one);
        assert!(id.max_abs_diff(&a) == 0.0);
        // Euler operator weight n at same power
        let euler = apply_linear_term(&a, 1, 1, 0, 0, &one);
        for (x, y) in euler.entry(2, 1).values.iter().zip(&f.values) {
            assert!((x - y * 2.0).norm() < 1e-15);
        }
        // T^3 d^2 on power 2 lands at 3 with weight 2
        let shifted = apply_linear_term(&a, 3, 2, 0, 0, &one);
        for (x, y) in shifted.entry(3, 1).values.iter().zip(&f.values) {
            assert!((x - y * 2.0).norm() < 1e-15);
        }
        assert!(shifted.entry(2, 1).is_zero());
    }

    #[test]
    fn table_csv_round_trip() {
        let inst = inst_a0();
        let g = ModeGrid::new(4.0, 17).unwrap();
        let u = solve_recursion(&inst, eps(), 3, 2, &g).unwrap();
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &u, Some((2, 3))).unwrap();
        let (back, ks) = read_table_csv(std::io::BufReader::new(&buf[..]), eps()).unwrap();
        assert_eq!(ks, Some((2, 3)));
        assert_eq!(u, back);
    }
}
