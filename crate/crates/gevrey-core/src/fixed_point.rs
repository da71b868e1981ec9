//! The Borel-plane convolution fixed point. The eight-term operator is
//! realized entirely in coefficient space: every integral becomes a
//! Beta/Gamma-weighted index map, the divisor polynomials become truncated
//! reciprocal series, and the Picard iteration from zero stabilizes exactly
//! because every term strictly raises the graded order.

use crate::borel::{apply_axis_map, beta_convolve, borel_transform, BorelTable, ConvKernel, FNormParams};
use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, PolySpec};
use crate::mode_space::{star_product, ModeFunction, ModeGrid};
use crate::series::{generated_data, CoeffTable, GeneratedData};
use crate::special::{falling, gamma_ratio};
use crate::C64;
use std::sync::Arc;

/// Coefficients A_{delta,p} of the expansion of T^{delta(k+1)} ∂^delta in
/// powers of the Euler-type operator T^{k+1} ∂.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorExpansion {
    pub delta: u32,
    pub k: u32,
    /// a[p-1] = A_{delta,p} for p = 1..delta-1
    pub a: Vec<f64>,
}

/// Product (n)(n+k)...(n+(p-1)k), the action of (T^{k+1}∂)^p on T^n.
fn euler_product(n: f64, p: u32, k: f64) -> f64 {
    let mut v = 1.0;
    for i in 0..p {
        v *= n + i as f64 * k;
    }
    v
}

/// Determines A_{delta,p} by acting with both sides on monomials T^n for
/// n = 1..delta-1 and solving the resulting linear system.
pub fn expansion_coeffs(delta: u32, k: u32) -> OperatorExpansion {
    assert!(delta >= 1 && k >= 1);
    let m = (delta - 1) as usize;
    if m == 0 {
        return OperatorExpansion { delta, k, a: Vec::new() };
    }
    let kf = k as f64;
    let mut mat = vec![vec![0.0f64; m + 1]; m];
    for (r, row) in mat.iter_mut().enumerate() {
        let n = (r + 1) as f64;
        for p in 1..=m as u32 {
            row[(p - 1) as usize] = euler_product(n, p, kf);
        }
        row[m] = falling((r + 1) as i64, delta) - euler_product(n, delta, kf);
    }
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| mat[i][col].abs().partial_cmp(&mat[j][col].abs()).unwrap())
            .unwrap();
        mat.swap(col, piv);
        let d = mat[col][col];
        for r in 0..m {
            if r != col && mat[r][col] != 0.0 {
                let f = mat[r][col] / d;
                for c in col..=m {
                    mat[r][c] -= f * mat[col][c];
                }
            }
        }
    }
    let a = (0..m).map(|r| mat[r][m] / mat[r][r]).collect();
    OperatorExpansion { delta, k, a }
}

impl OperatorExpansion {
    /// Residual of the defining identity on T^n.
    pub fn identity_residual(&self, n: u32) -> f64 {
        let kf = self.k as f64;
        let lhs = falling(n as i64, self.delta);
        let mut rhs = euler_product(n as f64, self.delta, kf);
        for (p, &ap) in self.a.iter().enumerate() {
            rhs += ap * euler_product(n as f64, (p + 1) as u32, kf);
        }
        (lhs - rhs).abs()
    }
}

/// Truncated reciprocal of the divisor polynomial
/// P_{m,j}(τ) = Q_j(im) k_j - R_{Dj}(im) k_j^{delta} τ^{(delta-1) k_j}
/// as a geometric series in τ^{(delta-1) k_j}, per mode node.
#[derive(Debug, Clone)]
pub struct PmReciprocal {
    pub axis: u8,
    /// power step (delta - 1) k_j
    pub step: usize,
    /// coeffs[q][node] multiplies τ^{step·q}
    pub coeffs: Vec<Vec<C64>>,
}

/// Geometric-series coefficients of 1/P_{m,j} up to table order `n_max`.
pub fn reciprocal_pm(
    inst: &ProblemInstance,
    axis: u8,
    eps: C64,
    grid: &Arc<ModeGrid>,
    n_max: usize,
) -> Result<PmReciprocal> {
    let ex = &inst.exponents;
    let (q, rd, k, delta) = match axis {
        1 => (&inst.polys.q1, &inst.polys.rd1, ex.k1 as i64, ex.delta[ex.d1 - 1]),
        _ => (&inst.polys.q2, &inst.polys.rd2, ex.k2 as i64, ex.deltat[ex.d2 - 1]),
    };
    let step = ((delta - 1) * k).max(1) as usize;
    let n_terms = if delta > 1 { (n_max.saturating_sub(1)) / step + 1 } else { 1 };
    let mut coeffs = vec![vec![C64::new(0.0, 0.0); grid.n_points]; n_terms];
    for (i, &m) in grid.nodes().iter().enumerate() {
        let a = q.eval_im(m, eps) * k as f64;
        if a.norm() == 0.0 {
            return Err(Error::KernelSingular { m });
        }
        let b = if delta > 1 {
            rd.eval_im(m, eps) * (k as f64).powi(delta as i32)
        } else {
            C64::new(0.0, 0.0)
        };
        let mut term = 1.0 / a;
        for qrow in coeffs.iter_mut() {
            qrow[i] = term;
            term = term * b / a;
        }
    }
    Ok(PmReciprocal { axis, step, coeffs })
}

impl PmReciprocal {
    /// Multiplies a table by the reciprocal series along this axis.
    fn apply(&self, w: &BorelTable) -> BorelTable {
        let t = &w.table;
        let mut out = BorelTable::zero_like(w);
        for (n1, n2) in t.iter_indices() {
            let src = t.entry(n1, n2);
            if src.is_zero() {
                continue;
            }
            for (qi, qrow) in self.coeffs.iter().enumerate() {
                let s = qi * self.step;
                let (t1, t2) = if self.axis == 1 { (n1 + s, n2) } else { (n1, n2 + s) };
                if t1 > t.n1_max || t2 > t.n2_max {
                    break;
                }
                let mut e = out.table.entry(t1, t2).clone();
                for (vi, v) in e.values.iter_mut().enumerate() {
                    *v += src.values[vi] * qrow[vi];
                }
                out.table.set_entry(t1, t2, e);
            }
        }
        out
    }
}

/// Everything fixed across Picard sweeps for one (instance, epsilon, grid,
/// truncation) tuple.
pub struct HContext {
    pub eps: C64,
    pub grid: Arc<ModeGrid>,
    pub n1_max: usize,
    pub n2_max: usize,
    pub k1: u32,
    pub k2: u32,
    phi: BorelTable,
    phi1: Vec<ModeFunction>,
    phi2: Vec<ModeFunction>,
    c00: ModeFunction,
    psi: BorelTable,
    recip1: PmReciprocal,
    recip2: PmReciprocal,
    exp1: OperatorExpansion,
    exp2: OperatorExpansion,
    inst: ProblemInstance,
}

impl HContext {
    pub fn new(
        inst: &ProblemInstance,
        eps: C64,
        n1_max: usize,
        n2_max: usize,
        grid: &Arc<ModeGrid>,
    ) -> Result<HContext> {
        let data = generated_data(inst, n1_max, n2_max, grid);
        Self::with_data(inst, eps, n1_max, n2_max, grid, &data)
    }

    pub fn with_data(
        inst: &ProblemInstance,
        eps: C64,
        n1_max: usize,
        n2_max: usize,
        grid: &Arc<ModeGrid>,
        data: &GeneratedData,
    ) -> Result<HContext> {
        if eps.norm() == 0.0 || eps.norm() >= inst.space.eps0 {
            return Err(Error::InvalidInstance(format!(
                "epsilon must satisfy 0 < |eps| < eps0 = {}",
                inst.space.eps0
            )));
        }
        let ex = &inst.exponents;
        let (k1, k2) = (ex.k1, ex.k2);
        // inner part of the coefficient family, Borel-rescaled
        let mut cinner = CoeffTable::zero(n1_max, n2_max, eps, grid.clone());
        for n1 in 1..=n1_max {
            for n2 in 1..=n2_max {
                cinner.set_entry(n1, n2, data.c[n1][n2].clone());
            }
        }
        let phi = borel_transform(&cinner, k1, k2);
        let phi1: Vec<ModeFunction> = (1..=n1_max)
            .map(|a| data.c[a][0].scale(C64::new(gamma_ratio(1.0, a as f64 / k1 as f64), 0.0)))
            .collect();
        let phi2: Vec<ModeFunction> = (1..=n2_max)
            .map(|b| data.c[0][b].scale(C64::new(gamma_ratio(1.0, b as f64 / k2 as f64), 0.0)))
            .collect();
        let c00 = data.c[0][0].clone();
        let mut ftab = CoeffTable::zero(n1_max, n2_max, eps, grid.clone());
        for n1 in 1..=n1_max {
            for n2 in 1..=n2_max {
                ftab.set_entry(n1, n2, data.f[n1 - 1][n2 - 1].clone());
            }
        }
        let psi = borel_transform(&ftab, k1, k2);
        let recip1 = reciprocal_pm(inst, 1, eps, grid, n1_max)?;
        let recip2 = reciprocal_pm(inst, 2, eps, grid, n2_max)?;
        let exp1 = expansion_coeffs(ex.delta[ex.d1 - 1] as u32, k1);
        let exp2 = expansion_coeffs(ex.deltat[ex.d2 - 1] as u32, k2);
        Ok(HContext {
            eps,
            grid: grid.clone(),
            n1_max,
            n2_max,
            k1,
            k2,
            phi,
            phi1,
            phi2,
            c00,
            psi,
            recip1,
            recip2,
            exp1,
            exp2,
            inst: inst.clone(),
        })
    }

    fn k(&self, axis: u8) -> f64 {
        if axis == 1 {
            self.k1 as f64
        } else {
            self.k2 as f64
        }
    }

    /// The A-operator divided by τ^k: index shift k(delta-1) with weight
    /// Σ_p A_{delta,p} k^p Γ(n/k + p) / Γ(n/k + delta).
    fn a_over_tk(&self, w: &BorelTable, axis: u8) -> BorelTable {
        let exp = if axis == 1 { &self.exp1 } else { &self.exp2 };
        let k = self.k(axis);
        if exp.a.is_empty() {
            return BorelTable::zero_like(w);
        }
        let a = exp.a.clone();
        let delta = exp.delta as f64;
        let shift = (exp.k as usize) * (exp.delta as usize - 1);
        apply_axis_map(w, axis, shift, move |n| {
            let x = n as f64 / k;
            let mut acc = 0.0;
            for (pi, &ap) in a.iter().enumerate() {
                let p = (pi + 1) as f64;
                acc += ap * k.powf(p) * gamma_ratio(x + p, x + delta);
            }
            C64::new(acc, 0.0)
        })
    }

    /// Exact transform of T^{k+1+d_l} ∂^{delta_l} divided by τ^k: single map
    /// with shift d_{l,k} + k(delta_l - 1) combining the Euler-power part and
    /// the expansion correction.
    fn linear_axis_map(&self, w: &BorelTable, axis: u8, d_lk: usize, delta_l: u32) -> BorelTable {
        let k = self.k(axis);
        let exp = expansion_coeffs(delta_l, if axis == 1 { self.k1 } else { self.k2 });
        let shift = d_lk + (k as usize) * (delta_l as usize - 1);
        let a = exp.a;
        let dl = delta_l as f64;
        let dk = d_lk as f64;
        apply_axis_map(w, axis, shift, move |n| {
            let x = n as f64 / k;
            let mut euler = k.powf(dl);
            for (pi, &ap) in a.iter().enumerate() {
                let p = (pi + 1) as f64;
                euler += ap * k.powf(p) * gamma_ratio(x + p, x + dl);
            }
            C64::new(euler * gamma_ratio(x + dl, x + dl + dk / k), 0.0)
        })
    }

    /// Outer kernel map shared by the convolution terms: shift 1 with weight
    /// Γ(n/k)/Γ((n+k+1)/k) per axis.
    fn out_map(&self, w: &BorelTable, axis: u8) -> BorelTable {
        let k = self.k(axis);
        apply_axis_map(w, axis, 1, move |n| {
            C64::new(gamma_ratio(n as f64 / k, (n as f64 + k + 1.0) / k), 0.0)
        })
    }

    fn out_maps(&self, w: &BorelTable) -> BorelTable {
        self.out_map(&self.out_map(w, 1), 2)
    }

    fn recip_both(&self, w: &BorelTable) -> BorelTable {
        self.recip2.apply(&self.recip1.apply(w))
    }

    fn mode_mult(&self, w: &BorelTable, poly: &PolySpec) -> BorelTable {
        let eps = self.eps;
        let mut out = BorelTable::zero_like(w);
        for (n1, n2) in w.table.iter_indices() {
            let e = w.table.entry(n1, n2);
            if e.is_zero() {
                continue;
            }
            out.table.set_entry(n1, n2, e.map_with_m(|m, v| v * poly.eval_im(m, eps)));
        }
        out
    }

    pub fn h1(&self, w: &BorelTable) -> BorelTable {
        let p = &self.inst.polys;
        let t1 = self.recip2.apply(&self.mode_mult(&self.a_over_tk(w, 2), &p.rd2));
        let t2 = self.recip1.apply(&self.mode_mult(&self.a_over_tk(w, 1), &p.rd1));
        let cross = self.a_over_tk(&self.a_over_tk(w, 1), 2);
        let t3 = self.recip_both(&self.mode_mult(&self.mode_mult(&cross, &p.rd1), &p.rd2));
        let mut acc = t1;
        acc.add_assign_scaled(&t2, C64::new(1.0, 0.0));
        acc.add_assign_scaled(&t3, C64::new(-1.0, 0.0));
        acc
    }

    pub fn h2(&self, w: &BorelTable) -> Result<BorelTable> {
        let p = &self.inst.polys;
        if p.p1.is_zero() || p.p2.is_zero() {
            return Ok(BorelTable::zero_like(w));
        }
        let one = PolySpec::constant(1.0);
        let kern = ConvKernel::Poly { q1: &p.p1, q2: &p.p2, divisor: &one };
        let bb = beta_convolve(w, w, &kern)?;
        let mapped = self.recip_both(&self.out_maps(&bb));
        let scale = self.eps.powi(-2) / (2.0 * std::f64::consts::PI).sqrt();
        let mut out = BorelTable::zero_like(w);
        out.add_assign_scaled(&mapped, scale);
        Ok(out)
    }

    pub fn h3(&self, w: &BorelTable) -> BorelTable {
        let ex = &self.inst.exponents;
        let p = &self.inst.polys;
        let mut acc = BorelTable::zero_like(w);
        for l1 in 1..ex.d1 {
            for l2 in 1..ex.d2 {
                let rl = &p.r[l1 - 1][l2 - 1];
                if rl.is_zero() {
                    continue;
                }
                let (dl, sl) = (ex.d[l1 - 1], ex.delta[l1 - 1]);
                let (dtl, stl) = (ex.dt[l2 - 1], ex.deltat[l2 - 1]);
                let dk1 = (dl + ex.k1 as i64 + 1 - sl * (ex.k1 as i64 + 1)) as usize;
                let dk2 = (dtl + ex.k2 as i64 + 1 - stl * (ex.k2 as i64 + 1)) as usize;
                let m1 = self.linear_axis_map(w, 1, dk1, sl as u32);
                let m2 = self.linear_axis_map(&m1, 2, dk2, stl as u32);
                let term = self.recip_both(&self.mode_mult(&m2, rl));
                let pw = ex.big_delta[l1 - 1][l2 - 1] - dl - dtl + sl + stl - 2;
                acc.add_assign_scaled(&term, self.eps.powi(pw as i32));
            }
        }
        acc
    }

    pub fn h4(&self, w: &BorelTable) -> Result<BorelTable> {
        let one = PolySpec::constant(1.0);
        let kern = ConvKernel::Poly { q1: &one, q2: &self.inst.polys.r0, divisor: &one };
        let bb = beta_convolve(&self.phi, w, &kern)?;
        let mapped = self.recip_both(&self.out_maps(&bb));
        let scale = self.eps.powi(-2) / (2.0 * std::f64::consts::PI).sqrt();
        let mut out = BorelTable::zero_like(w);
        out.add_assign_scaled(&mapped, scale);
        Ok(out)
    }

    /// Convolution against the single-variable family along one axis.
    fn h56_core(&self, w: &BorelTable, axis: u8) -> Result<BorelTable> {
        let eps = self.eps;
        let r0 = &self.inst.polys.r0;
        let one = |_m: f64| C64::new(1.0, 0.0);
        let r0f = |m: f64| r0.eval_im(m, eps);
        let k = self.k(axis);
        let phis = if axis == 1 { &self.phi1 } else { &self.phi2 };
        let mut out = BorelTable::zero_like(w);
        for (n1, n2) in w.table.iter_indices() {
            let n = if axis == 1 { n1 } else { n2 };
            let mut acc = ModeFunction::zero(self.grid.clone());
            let mut any = false;
            for a in 1..n {
                let b = n - a;
                let fa = &phis[a - 1];
                if fa.is_zero() {
                    continue;
                }
                let src = if axis == 1 { w.table.entry(b, n2) } else { w.table.entry(n1, b) };
                if src.is_zero() {
                    continue;
                }
                let s = star_product(fa, src, &one, &r0f, &one)?;
                let wgt = crate::special::beta(a as f64 / k, b as f64 / k);
                acc.add_assign_scaled(&s, C64::new(wgt, 0.0));
                any = true;
            }
            if any {
                out.table.set_entry(n1, n2, acc);
            }
        }
        Ok(out)
    }

    pub fn h5(&self, w: &BorelTable) -> Result<BorelTable> {
        let core = self.h56_core(w, 1)?;
        let mapped = self.recip_both(&self.out_maps(&core));
        let scale = self.eps.powi(-2) / (2.0 * std::f64::consts::PI).sqrt();
        let mut out = BorelTable::zero_like(w);
        out.add_assign_scaled(&mapped, scale);
        Ok(out)
    }

    pub fn h6(&self, w: &BorelTable) -> Result<BorelTable> {
        let core = self.h56_core(w, 2)?;
        let mapped = self.recip_both(&self.out_maps(&core));
        let scale = self.eps.powi(-2) / (2.0 * std::f64::consts::PI).sqrt();
        let mut out = BorelTable::zero_like(w);
        out.add_assign_scaled(&mapped, scale);
        Ok(out)
    }

    pub fn h7(&self, w: &BorelTable) -> Result<BorelTable> {
        if self.c00.is_zero() {
            return Ok(BorelTable::zero_like(w));
        }
        let eps = self.eps;
        let r0 = &self.inst.polys.r0;
        let one = |_m: f64| C64::new(1.0, 0.0);
        let r0f = |m: f64| r0.eval_im(m, eps);
        let mut core = BorelTable::zero_like(w);
        for (n1, n2) in w.table.iter_indices() {
            let e = w.table.entry(n1, n2);
            if e.is_zero() {
                continue;
            }
            core.table.set_entry(n1, n2, star_product(&self.c00, e, &one, &r0f, &one)?);
        }
        let mapped = self.recip_both(&self.out_maps(&core));
        let scale = self.eps.powi(-2) / (2.0 * std::f64::consts::PI).sqrt();
        let mut out = BorelTable::zero_like(w);
        out.add_assign_scaled(&mapped, scale);
        Ok(out)
    }

    pub fn h8(&self) -> BorelTable {
        let k1 = self.k1 as f64;
        let k2 = self.k2 as f64;
        let s1 = apply_axis_map(&self.psi, 1, 0, move |n| C64::new(k1 / n as f64, 0.0));
        let s2 = apply_axis_map(&s1, 2, 0, move |n| C64::new(k2 / n as f64, 0.0));
        let mapped = self.recip_both(&s2);
        let mut out = BorelTable::zero_like(&self.psi);
        out.add_assign_scaled(&mapped, self.eps.powi(-2));
        out
    }

    /// One application of the full operator.
    pub fn apply(&self, w: &BorelTable) -> Result<BorelTable> {
        if w.table.n1_max != self.n1_max
            || w.table.n2_max != self.n2_max
            || w.k1 != self.k1
            || w.k2 != self.k2
        {
            return Err(Error::ShapeMismatch("operator context and table disagree".into()));
        }
        let mut acc = self.h1(w);
        acc.add_assign_scaled(&self.h2(w)?, C64::new(1.0, 0.0));
        acc.add_assign_scaled(&self.h3(w), C64::new(1.0, 0.0));
        acc.add_assign_scaled(&self.h4(w)?, C64::new(1.0, 0.0));
        acc.add_assign_scaled(&self.h5(w)?, C64::new(1.0, 0.0));
        acc.add_assign_scaled(&self.h6(w)?, C64::new(1.0, 0.0));
        acc.add_assign_scaled(&self.h7(w)?, C64::new(1.0, 0.0));
        acc.add_assign_scaled(&self.h8(), C64::new(1.0, 0.0));
        Ok(acc)
    }
}

/// Applies the full operator once; the preferred entry point when no context
/// reuse is needed.
pub fn apply_h(inst: &ProblemInstance, eps: C64, w: &BorelTable) -> Result<BorelTable> {
    let grid = w.table.grid.clone();
    let ctx = HContext::new(inst, eps, w.table.n1_max, w.table.n2_max, &grid)?;
    ctx.apply(w)
}

#[derive(Debug)]
pub struct PicardResult {
    pub omega: BorelTable,
    pub iterations: usize,
    /// measured sup ratio ||H(w1) - H(w2)|| / ||w1 - w2|| over sample pairs;
    /// reported, never asserted
    pub contraction_estimate: f64,
}

/// Iterates w <- H(w) from zero. Strict order raising makes the truncated
/// table exact after at most n1_max + n2_max sweeps; stabilization is
/// detected bitwise.
pub fn picard_solve(
    inst: &ProblemInstance,
    eps: C64,
    n1_max: usize,
    n2_max: usize,
    grid: &Arc<ModeGrid>,
) -> Result<PicardResult> {
    let ctx = HContext::new(inst, eps, n1_max, n2_max, grid)?;
    picard_solve_with(&ctx)
}

pub fn picard_solve_with(ctx: &HContext) -> Result<PicardResult> {
    let zero = BorelTable {
        table: CoeffTable::zero(ctx.n1_max, ctx.n2_max, ctx.eps, ctx.grid.clone()),
        k1: ctx.k1,
        k2: ctx.k2,
    };
    let mut w = zero;
    let cap = ctx.n1_max + ctx.n2_max + 2;
    let mut iterations = 0;
    loop {
        let next = ctx.apply(&w)?;
        iterations += 1;
        if next.table == w.table {
            w = next;
            break;
        }
        w = next;
        if iterations > cap {
            return Err(Error::NonStabilization(cap));
        }
    }

    // contraction estimate over perturbed pairs near the fixed point
    let p = FNormParams::for_instance(&ctx.inst, ctx.eps);
    let mut est: f64 = 0.0;
    let scale = w.table.max_abs().max(1e-12);
    for s in 0..3u32 {
        let mut w2 = BorelTable::zero_like(&w);
        w2.add_assign_scaled(&w, C64::new(1.0, 0.0));
        let bump = perturbation(ctx, s, 0.1 * scale);
        w2.add_assign_scaled(&bump, C64::new(1.0, 0.0));
        let hw = ctx.apply(&w)?;
        let hw2 = ctx.apply(&w2)?;
        let mut dh = BorelTable::zero_like(&w);
        dh.add_assign_scaled(&hw, C64::new(1.0, 0.0));
        dh.add_assign_scaled(&hw2, C64::new(-1.0, 0.0));
        let num = crate::borel::f_norm(&dh, &p)?;
        let den = crate::borel::f_norm(&bump, &p)?;
        if den > 0.0 {
            est = est.max(num / den);
        }
    }
    Ok(PicardResult { omega: w, iterations, contraction_estimate: est })
}

fn perturbation(ctx: &HContext, seed: u32, amp: f64) -> BorelTable {
    let mut t = CoeffTable::zero(ctx.n1_max, ctx.n2_max, ctx.eps, ctx.grid.clone());
    let beta = ctx.inst.space.beta;
    let mu = ctx.inst.space.mu;
    for n1 in 1..=ctx.n1_max.min(3) {
        for n2 in 1..=ctx.n2_max.min(3) {
            let ph = 1.7 * (seed as f64 + 1.0) + 0.9 * n1 as f64 - 0.4 * n2 as f64;
            let f = ModeFunction::from_fn(ctx.grid.clone(), |m| {
                let g = (-beta * m.abs()).exp() * (1.0 + m.abs()).powf(-mu);
                C64::from_polar(amp * g, ph + 0.2 * m)
            });
            t.set_entry(n1, n2, f);
        }
    }
    BorelTable { table: t, k1: ctx.k1, k2: ctx.k2 }
}
