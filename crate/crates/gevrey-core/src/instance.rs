//! Problem instances: exponent tables, polynomial data, space parameters and
//! generated coefficient/forcing families, together with validation of every
//! structural condition the solvers rely on.

use crate::error::{Error, Result};
use crate::mode_space::{ModeFunction, ModeGrid};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

const MAX_ORDER: i64 = 64;
const MAX_DEGREE: usize = 64;
const MAX_MASK_INDEX: u32 = 512;

/// Polynomial in X, lowest degree first, optionally with polynomial
/// dependence of each coefficient on the perturbation parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolySpec {
    pub coeffs: Vec<C64>,
    /// When present, `eps_coeffs[i]` is the epsilon-polynomial replacing
    /// `coeffs[i]` (lowest epsilon-power first).
    pub eps_coeffs: Option<Vec<Vec<C64>>>,
}

impl PolySpec {
    pub fn constant(c: f64) -> Self {
        PolySpec { coeffs: vec![C64::new(c, 0.0)], eps_coeffs: None }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        PolySpec {
            coeffs: coeffs.iter().map(|&c| C64::new(c, 0.0)).collect(),
            eps_coeffs: None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    /// Degree after stripping trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if let Some(ec) = &self.eps_coeffs {
            for i in (0..ec.len()).rev() {
                if ec[i].iter().any(|c| c.norm_sqr() != 0.0) {
                    return Some(i);
                }
            }
            return None;
        }
        for i in (0..self.coeffs.len()).rev() {
            if self.coeffs[i].norm_sqr() != 0.0 {
                return Some(i);
            }
        }
        None
    }

    fn coeff_at(&self, i: usize, eps: C64) -> C64 {
        if let Some(ec) = &self.eps_coeffs {
            let mut acc = C64::new(0.0, 0.0);
            if let Some(p) = ec.get(i) {
                for c in p.iter().rev() {
                    acc = acc * eps + c;
                }
            }
            acc
        } else {
            self.coeffs.get(i).copied().unwrap_or_else(|| C64::new(0.0, 0.0))
        }
    }

    /// Leading coefficient at the given epsilon.
    pub fn leading(&self, eps: C64) -> Option<(usize, C64)> {
        self.degree().map(|d| (d, self.coeff_at(d, eps)))
    }

    pub fn eval(&self, x: C64, eps: C64) -> C64 {
        let n = self
            .eps_coeffs
            .as_ref()
            .map(|e| e.len())
            .unwrap_or(self.coeffs.len());
        let mut acc = C64::new(0.0, 0.0);
        for i in (0..n).rev() {
            acc = acc * x + self.coeff_at(i, eps);
        }
        acc
    }

    /// Evaluation at X = i·m (the kernel argument used everywhere).
    pub fn eval_im(&self, m: f64, eps: C64) -> C64 {
        self.eval(C64::new(0.0, m), eps)
    }

    /// Product polynomial (only well-defined for epsilon-free specs).
    pub fn product(&self, other: &PolySpec) -> PolySpec {
        let a = &self.coeffs;
        let b = &other.coeffs;
        if a.is_empty() || b.is_empty() {
            return PolySpec::default();
        }
        let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        PolySpec { coeffs: out, eps_coeffs: None }
    }
}

/// Weighted-space and disc parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub beta: f64,
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub rho: f64,
    pub eps0: f64,
}

/// Discrete exponent data. Arrays are stored 0-based internally; position
/// `l-1` holds the table value for index `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTables {
    pub k1: u32,
    pub k2: u32,
    pub d1: usize,
    pub d2: usize,
    pub d: Vec<i64>,
    pub delta: Vec<i64>,
    pub dt: Vec<i64>,
    pub deltat: Vec<i64>,
    /// `big_delta[l1-1][l2-1]` for 1 <= l1 <= D1, 1 <= l2 <= D2.
    pub big_delta: Vec<Vec<i64>>,
}

/// Built-in mode profiles for generated coefficients. All have unit weighted
/// norm by construction (the modulation is a pure phase).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeProfile {
    /// e^{-beta|m|}(1+|m|)^{-mu}
    Default,
    /// same envelope with an index-dependent phase twist in m
    PhaseTwist,
}

/// Generator for the coefficient family C and the forcing family F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub k0: f64,
    pub t0: f64,
    pub profile: ModeProfile,
    /// Indices (n1, n2) with nonzero C_{n1,n2}; n1, n2 >= 0.
    pub c_mask: Vec<(u32, u32)>,
    /// Indices (n1, n2) with nonzero F_{n1,n2}; n1, n2 >= 1.
    pub f_mask: Vec<(u32, u32)>,
}

/// Polynomial data of the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyData {
    pub q1: PolySpec,
    pub q2: PolySpec,
    pub r0: PolySpec,
    /// Inner coefficients `r[l1-1][l2-1]` for 1 <= l1 <= D1, 1 <= l2 <= D2.
    /// Boundary rows (l1 = D1 or l2 = D2) must be zero except the corner,
    /// which is represented by `rd1 * rd2`.
    pub r: Vec<Vec<PolySpec>>,
    pub rd1: PolySpec,
    pub rd2: PolySpec,
    pub p1: PolySpec,
    pub p2: PolySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub exponents: ExponentTables,
    pub polys: PolyData,
    pub space: SpaceParams,
    pub gen: GeneratorSpec,
}

/// Values derived from the exponent tables by exact integer arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedExponents {
    pub delta_corner: i64,
    pub delta_d1_0: i64,
    pub delta_0_d2: i64,
    /// d_{l,k1} for l = 1..D1
    pub d_k1: Vec<i64>,
    /// dt_{l,k2} for l = 1..D2
    pub dt_k2: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Required,
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub label: String,
    pub condition: String,
    pub pass: bool,
    pub severity: Severity,
    pub detail: String,
}

/// Constructed witness for the unbounded-sector condition on
/// Q_j(im)/R_{Dj}(im).
#[derive(Debug, Clone, Serialize)]
pub struct SectorWitness {
    pub axis: u8,
    pub direction: f64,
    pub aperture: f64,
    pub radius: f64,
    pub arc_width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub conditions: Vec<ConditionReport>,
    pub sector_witnesses: Vec<SectorWitness>,
    /// Minimum modulus over the grid of the divisor-polynomial roots, per axis.
    pub min_root_radius: [f64; 2],
}

impl ValidationReport {
    pub fn failed_labels(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass && c.severity == Severity::Required)
            .map(|c| c.label.as_str())
            .collect()
    }
}

impl ExponentTables {
    fn check_dims(&self) -> Result<()> {
        let ok = self.d1 >= 2
            && self.d2 >= 2
            && self.d1 <= MAX_ORDER as usize
            && self.d2 <= MAX_ORDER as usize
            && self.k1 >= 1
            && self.k2 >= 1
            && self.k1 <= MAX_ORDER as u32
            && self.k2 <= MAX_ORDER as u32
            && self.d.len() == self.d1
            && self.delta.len() == self.d1
            && self.dt.len() == self.d2
            && self.deltat.len() == self.d2
            && self.big_delta.len() == self.d1
            && self.big_delta.iter().all(|row| row.len() == self.d2)
            && self
                .d
                .iter()
                .chain(&self.delta)
                .chain(&self.dt)
                .chain(&self.deltat)
                .all(|&v| (0..=MAX_ORDER).contains(&v))
            && self
                .big_delta
                .iter()
                .flatten()
                .all(|&v| (-MAX_ORDER..=MAX_ORDER).contains(&v));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInstance("exponent tables malformed or out of range".into()))
        }
    }
}

/// Derived exponent values; fails on malformed tables or a negative d_{l,k}.
pub fn derived_exponents(inst: &ProblemInstance) -> Result<DerivedExponents> {
    let e = &inst.exponents;
    e.check_dims()?;
    let (k1, k2) = (e.k1 as i64, e.k2 as i64);
    let dd1 = e.d[e.d1 - 1];
    let dd2 = e.dt[e.d2 - 1];
    let sd1 = e.delta[e.d1 - 1];
    let sd2 = e.deltat[e.d2 - 1];
    let delta_corner = dd1 + dd2 - sd1 - sd2 + 2;
    let delta_d1_0 = dd1 - sd1 + 1;
    let delta_0_d2 = dd2 - sd2 + 1;
    let mut d_k1 = Vec::with_capacity(e.d1);
    for l in 0..e.d1 {
        let v = e.d[l] + k1 + 1 - e.delta[l] * (k1 + 1);
        if v < 0 {
            return Err(Error::InvalidInstance(format!(
                "inconsistent exponent tables: d_{{{},k1}} = {v} < 0",
                l + 1
            )));
        }
        d_k1.push(v);
    }
    let mut dt_k2 = Vec::with_capacity(e.d2);
    for l in 0..e.d2 {
        let v = e.dt[l] + k2 + 1 - e.deltat[l] * (k2 + 1);
        if v < 0 {
            return Err(Error::InvalidInstance(format!(
                "inconsistent exponent tables: dt_{{{},k2}} = {v} < 0",
                l + 1
            )));
        }
        dt_k2.push(v);
    }
    Ok(DerivedExponents { delta_corner, delta_d1_0, delta_0_d2, d_k1, dt_k2 })
}

/// Minimal enclosing arc of a set of angles: returns (mid, half_width).
/// `None` when the angles wrap all the way around.
fn enclosing_arc(angles: &[f64]) -> Option<(f64, f64)> {
    if angles.is_empty() {
        return None;
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(tau)).collect();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = a.len();
    let mut best_gap = 0.0;
    let mut best_at = 0;
    for i in 0..n {
        let next = if i + 1 == n { a[0] + tau } else { a[i + 1] };
        let gap = next - a[i];
        if gap > best_gap {
            best_gap = gap;
            best_at = i;
        }
    }
    let width = tau - best_gap;
    if width >= tau - 1e-9 {
        return None;
    }
    let start = if best_at + 1 == n { a[0] } else { a[best_at + 1] };
    let mid = (start + width / 2.0).rem_euclid(tau);
    Some((mid, width / 2.0))
}

/// Modulus of the divisor-polynomial roots on the given axis at mode value m:
/// |Q_j(im) / (R_{Dj}(im) k_j^{delta-1})|^{1/((delta-1) k_j)}.
pub fn root_modulus(inst: &ProblemInstance, axis: u8, m: f64, eps: C64) -> Option<f64> {
    let e = &inst.exponents;
    let (q, rd, k, delta) = match axis {
        1 => (&inst.polys.q1, &inst.polys.rd1, e.k1 as i64, e.delta[e.d1 - 1]),
        _ => (&inst.polys.q2, &inst.polys.rd2, e.k2 as i64, e.deltat[e.d2 - 1]),
    };
    let s = (delta - 1) * k;
    if s <= 0 {
        return None;
    }
    let rv = rd.eval_im(m, eps);
    if rv.norm() == 0.0 {
        return None;
    }
    let ratio = q.eval_im(m, eps).norm() / (rv.norm() * (k as f64).powi(delta as i32 - 1));
    Some(ratio.powf(1.0 / s as f64))
}

struct Checker {
    conditions: Vec<ConditionReport>,
}

impl Checker {
    fn push(&mut self, label: &str, condition: &str, pass: bool, severity: Severity, detail: String) {
        self.conditions.push(ConditionReport {
            label: label.to_string(),
            condition: condition.to_string(),
            pass,
            severity,
            detail,
        });
    }
    fn req(&mut self, label: &str, condition: &str, pass: bool, detail: String) {
        self.push(label, condition, pass, Severity::Required, detail);
    }
}

/// Checks every structural condition on the instance against the mode grid
/// and reports each with its label. Degenerate polynomial data (zero Q_j or
/// zero R_{D1}R_{D2}) is a hard error rather than a report entry.
pub fn validate_instance(inst: &ProblemInstance, grid: &ModeGrid) -> Result<ValidationReport> {
    let e = &inst.exponents;
    e.check_dims()?;
    let p = &inst.polys;
    if p.q1.is_zero() || p.q2.is_zero() {
        return Err(Error::InvalidInstance("invalid instance: zero Q polynomial".into()));
    }
    if p.rd1.is_zero() || p.rd2.is_zero() {
        return Err(Error::InvalidInstance("invalid instance: zero R_{D1,D2}".into()));
    }
    if p.r.len() != e.d1 || p.r.iter().any(|row| row.len() != e.d2) {
        return Err(Error::InvalidInstance("R coefficient matrix has wrong shape".into()));
    }

    let mut ck = Checker { conditions: Vec::new() };
    let (k1, k2) = (e.k1 as i64, e.k2 as i64);
    let eps_probe = C64::new(inst.space.eps0 * 0.5, 0.0);

    // ordering of the differential orders
    {
        let mut ok = e.delta[0] == 1 && e.deltat[0] == 1;
        ok &= e.delta.windows(2).all(|w| w[0] < w[1]);
        ok &= e.deltat.windows(2).all(|w| w[0] < w[1]);
        ck.req(
            "(33)",
            "delta_1 = deltat_1 = 1 and both sequences strictly increasing",
            ok,
            format!("delta={:?} deltat={:?}", e.delta, e.deltat),
        );
        ok = e.k1 < e.k2;
        ck.req("k1<k2", "k1 < k2", ok, format!("k1={} k2={}", e.k1, e.k2));
    }
    // monomial degrees against differential orders, first axis
    {
        let top = e.d[e.d1 - 1] == (e.delta[e.d1 - 1] - 1) * (k1 + 1);
        let inner = (0..e.d1 - 1).all(|l| e.d[l] > (e.delta[l] - 1) * (k1 + 1));
        ck.req(
            "(34)",
            "d_D1 = (delta_D1 - 1)(k1+1), d_l > (delta_l - 1)(k1+1) below",
            top && inner,
            format!("d={:?}", e.d),
        );
    }
    // second axis
    {
        let top = e.dt[e.d2 - 1] == (e.deltat[e.d2 - 1] - 1) * (k2 + 1);
        let inner = (0..e.d2 - 1).all(|l| e.dt[l] > (e.deltat[l] - 1) * (k2 + 1));
        ck.req(
            "(35)",
            "dt_D2 = (deltat_D2 - 1)(k2+1), dt_l > (deltat_l - 1)(k2+1) below",
            top && inner,
            format!("dt={:?}", e.dt),
        );
    }
    // distinguished epsilon exponents
    {
        let derived = derived_exponents(inst);
        let pass = match &derived {
            Ok(dx) => e.big_delta[e.d1 - 1][e.d2 - 1] == dx.delta_corner,
            Err(_) => false,
        };
        ck.req(
            "(36)",
            "Delta_{D1,D2} = d_D1 + dt_D2 - delta_D1 - deltat_D2 + 2",
            pass,
            format!(
                "stored {} derived {:?}",
                e.big_delta[e.d1 - 1][e.d2 - 1],
                derived.map(|d| d.delta_corner)
            ),
        );
        let nonneg = e.big_delta.iter().flatten().all(|&v| v >= 0);
        ck.req("Delta>=0", "all Delta_{l1,l2} >= 0", nonneg, String::new());
    }
    // vanishing mixed boundary coefficients
    {
        let mut ok = true;
        for l2 in 0..e.d2 - 1 {
            ok &= p.r[e.d1 - 1][l2].is_zero();
        }
        for l1 in 0..e.d1 - 1 {
            ok &= p.r[l1][e.d2 - 1].is_zero();
        }
        ck.req("(37)", "R_{D1,l2} = R_{l1,D2} = 0 for inner l", ok, String::new());
    }
    // degree dominance
    {
        let rcorner = p.rd1.product(&p.rd2);
        let degc = rcorner.degree().unwrap_or(0);
        let mut ok = p.q1.degree().unwrap_or(0) >= p.rd1.degree().unwrap_or(0)
            && p.q2.degree().unwrap_or(0) >= p.rd2.degree().unwrap_or(0);
        let mut detail = String::new();
        for (l1, row) in p.r.iter().enumerate() {
            for (l2, rl) in row.iter().enumerate() {
                if let Some(dl) = rl.degree() {
                    if dl > degc {
                        ok = false;
                        detail = format!("deg R_{{{},{}}} = {dl} > {degc}", l1 + 1, l2 + 1);
                    }
                }
            }
        }
        ok &= p.p1.degree().unwrap_or(0) <= degc && p.p2.degree().unwrap_or(0) <= degc;
        ck.req(
            "(38)",
            "deg Qj >= deg R_Dj; deg R_{D1,D2} dominates R_{l1,l2}, P1, P2",
            ok,
            detail,
        );
    }
    // nonvanishing on the grid plus leading-coefficient tail check
    {
        let mut detail = String::new();
        let mut ok = true;
        for (name, poly) in [("Q1", &p.q1), ("Q2", &p.q2)] {
            for &m in grid.nodes() {
                if poly.eval_im(m, eps_probe).norm() < 1e-12 {
                    ok = false;
                    detail = format!("{name}(im)=0 at m={m}");
                    break;
                }
            }
            // |m| -> infinity: the leading monomial dominates, nonzero lead
            if poly.leading(eps_probe).map(|(_, c)| c.norm() == 0.0).unwrap_or(true) {
                ok = false;
                detail = format!("{name} has zero leading coefficient");
            }
        }
        let rc = p.rd1.product(&p.rd2);
        for &m in grid.nodes() {
            if rc.eval_im(m, eps_probe).norm() < 1e-12 {
                ok = false;
                detail = format!("R_{{D1,D2}}(im)=0 at m={m}");
                break;
            }
        }
        ck.req("(39)", "Qj(im) != 0 and R_{D1,D2}(im) != 0 on the grid", ok, detail);
    }
    // gaps between top and inner orders, mixed positivity
    {
        let sd1 = e.delta[e.d1 - 1];
        let sd2 = e.deltat[e.d2 - 1];
        let mut ok = (0..e.d1 - 1).all(|l| k1 * (sd1 - e.delta[l]) >= 2);
        ok &= (0..e.d2 - 1).all(|l| k2 * (sd2 - e.deltat[l]) >= 2);
        for l1 in 0..e.d1 - 1 {
            for l2 in 0..e.d2 - 1 {
                ok &= e.big_delta[l1][l2] + k1 * (1 - sd1) + k2 * (1 - sd2) + 2 >= 0;
            }
        }
        ck.req(
            "(47)",
            "delta_D1 >= delta_l + 2/k1, deltat_D2 >= deltat_l + 2/k2, Delta_{l1,l2} + k1(1-delta_D1) + k2(1-deltat_D2) + 2 >= 0",
            ok,
            String::new(),
        );
    }
    // mu thresholds
    {
        let degp = p.p1.degree().unwrap_or(0).max(p.p2.degree().unwrap_or(0));
        ck.req(
            "mu-threshold",
            "mu > max(deg P1, deg P2) + 1",
            inst.space.mu > (degp + 1) as f64,
            format!("mu={} deg={}", inst.space.mu, degp),
        );
        let degq = p.q1.degree().unwrap_or(0).max(p.q2.degree().unwrap_or(0));
        ck.push(
            "mu-threshold-kernel",
            "mu > max(deg Q1, deg Q2) + 1 (used by the algebra kernel bound)",
            inst.space.mu > (degq + 1) as f64,
            Severity::Warning,
            format!("mu={} deg={}", inst.space.mu, degq),
        );
    }
    // positive space parameters
    {
        let s = &inst.space;
        let ok = s.beta > 0.0 && s.mu > 0.0 && s.nu1 > 0.0 && s.nu2 > 0.0 && s.rho > 0.0 && s.eps0 > 0.0;
        ck.req("space>0", "beta, mu, nu1, nu2, rho, eps0 all positive", ok, String::new());
    }
    // generator sanity
    {
        let ok = inst.gen.k0 > 0.0
            && inst.gen.t0 > 0.0
            && inst.gen.f_mask.iter().all(|&(a, b)| a >= 1 && b >= 1 && a <= MAX_MASK_INDEX && b <= MAX_MASK_INDEX)
            && inst.gen.c_mask.iter().all(|&(a, b)| a <= MAX_MASK_INDEX && b <= MAX_MASK_INDEX);
        ck.req("(7)", "generator bounds: K0, T0 > 0, masks in range", ok, String::new());
    }

    // sector witnesses for Qj/R_Dj and root radii
    let mut witnesses = Vec::new();
    let mut min_root = [f64::INFINITY; 2];
    for axis in [1u8, 2u8] {
        let (q, rd) = match axis {
            1 => (&p.q1, &p.rd1),
            _ => (&p.q2, &p.rd2),
        };
        let mut angles = Vec::with_capacity(grid.n_points + 2);
        let mut min_mod = f64::INFINITY;
        let mut nonzero = true;
        for &m in grid.nodes() {
            let rv = rd.eval_im(m, eps_probe);
            if rv.norm() == 0.0 {
                nonzero = false;
                continue;
            }
            let w = q.eval_im(m, eps_probe) / rv;
            if w.norm() == 0.0 {
                nonzero = false;
                continue;
            }
            angles.push(w.arg());
            min_mod = min_mod.min(w.norm());
        }
        // |m| -> infinity limit of the argument from the leading coefficients
        if let (Some((dq, cq)), Some((dr, cr))) = (q.leading(eps_probe), rd.leading(eps_probe)) {
            if cr.norm() > 0.0 {
                let lead = cq / cr;
                let rot = (dq as i64 - dr as i64) as f64 * std::f64::consts::FRAC_PI_2;
                angles.push(lead.arg() + rot);
                angles.push(lead.arg() - rot);
                if dq == dr {
                    min_mod = min_mod.min(lead.norm());
                }
            }
        }
        let arc = enclosing_arc(&angles);
        let pass = nonzero && min_mod > 0.0 && arc.is_some();
        if let Some((mid, half)) = arc {
            witnesses.push(SectorWitness {
                axis,
                direction: mid,
                aperture: (half + 0.01).min(std::f64::consts::PI - 1e-6),
                radius: min_mod * 0.9,
                arc_width: 2.0 * half,
            });
        }
        ck.req(
            "(29)",
            "Qj(im)/R_Dj(im) stays in an unbounded sector",
            pass,
            format!("axis {axis}: min modulus {min_mod:.6e}"),
        );

        for &m in grid.nodes() {
            if let Some(r) = root_modulus(inst, axis, m, eps_probe) {
                min_root[axis as usize - 1] = min_root[axis as usize - 1].min(r);
            }
        }
        // tail of the root modulus from leading coefficients
        if let (Some((dq, cq)), Some((dr, cr))) = (q.leading(eps_probe), rd.leading(eps_probe)) {
            if dq == dr && cr.norm() > 0.0 {
                let e_ = &inst.exponents;
                let (k, delta) = match axis {
                    1 => (e_.k1 as i64, e_.delta[e_.d1 - 1]),
                    _ => (e_.k2 as i64, e_.deltat[e_.d2 - 1]),
                };
                let s = (delta - 1) * k;
                if s > 0 {
                    let lim = ((cq / cr).norm() / (k as f64).powi(delta as i32 - 1))
                        .powf(1.0 / s as f64);
                    min_root[axis as usize - 1] = min_root[axis as usize - 1].min(lim);
                }
            }
        }
    }
    {
        let rho = inst.space.rho;
        let ok = rho < min_root[0] && rho < min_root[1];
        ck.req(
            "rho-vs-roots",
            "rho strictly below the minimum divisor-root radius",
            ok,
            format!("rho={} roots=({:.6}, {:.6})", rho, min_root[0], min_root[1]),
        );
    }

    let pass = ck
        .conditions
        .iter()
        .all(|c| c.pass || c.severity == Severity::Warning);
    Ok(ValidationReport { pass, conditions: ck.conditions, sector_witnesses: witnesses, min_root_radius: min_root })
}

/// Which generated family to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffKind {
    C,
    F,
}

/// Generated coefficient C_{n1,n2} or forcing F_{n1,n2}: exactly
/// K0 T0^{-(n1+n2)} times a unit-weighted-norm profile, zero off the mask.
pub fn generate_coefficients(
    gen: &GeneratorSpec,
    space: &SpaceParams,
    kind: CoeffKind,
    n1: u32,
    n2: u32,
    grid: &Arc<ModeGrid>,
) -> ModeFunction {
    let mask = match kind {
        CoeffKind::C => &gen.c_mask,
        CoeffKind::F => &gen.f_mask,
    };
    if !mask.contains(&(n1, n2)) {
        return ModeFunction::zero(grid.clone());
    }
    let amp = gen.k0 * gen.t0.powi(-((n1 + n2) as i32));
    let (beta, mu) = (space.beta, space.mu);
    // deterministic per-index global phase keeps tables honestly complex
    let phase0 = 0.61803398874989484 * (n1 as f64 * 31.0 + n2 as f64 * 17.0 + matches!(kind, CoeffKind::F) as u8 as f64 * 7.0);
    let twist = match gen.profile {
        ModeProfile::Default => 0.0,
        ModeProfile::PhaseTwist => 0.37 * n1 as f64 - 0.23 * n2 as f64 + 0.11,
    };
    ModeFunction::from_fn(grid.clone(), |m| {
        let g = (-beta * m.abs()).exp() * (1.0 + m.abs()).powf(-mu);
        C64::from_polar(amp * g, phase0 + twist * m)
    })
}

// ---------------------------------------------------------------------------
// file format

#[derive(Serialize, Deserialize)]
struct PolyFile {
    coeffs: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps_coeffs: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Serialize, Deserialize)]
struct ExponentsFile {
    k1: u32,
    k2: u32,
    #[serde(rename = "D1")]
    d1: usize,
    #[serde(rename = "D2")]
    d2: usize,
    d: BTreeMap<String, i64>,
    delta: BTreeMap<String, i64>,
    dt: BTreeMap<String, i64>,
    deltat: BTreeMap<String, i64>,
    #[serde(rename = "Delta")]
    big_delta: BTreeMap<String, BTreeMap<String, i64>>,
}

#[derive(Serialize, Deserialize)]
struct PolysFile {
    #[serde(rename = "Q1")]
    q1: PolyFile,
    #[serde(rename = "Q2")]
    q2: PolyFile,
    #[serde(rename = "R0")]
    r0: PolyFile,
    #[serde(rename = "R", default)]
    r: BTreeMap<String, BTreeMap<String, PolyFile>>,
    #[serde(rename = "RD1")]
    rd1: PolyFile,
    #[serde(rename = "RD2")]
    rd2: PolyFile,
    #[serde(rename = "P1")]
    p1: PolyFile,
    #[serde(rename = "P2")]
    p2: PolyFile,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    exponents: ExponentsFile,
    polys: PolysFile,
    space: SpaceParams,
    gen: GeneratorSpec,
}

fn poly_to_file(p: &PolySpec) -> PolyFile {
    PolyFile {
        coeffs: p.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        eps_coeffs: p
            .eps_coeffs
            .as_ref()
            .map(|e| e.iter().map(|q| q.iter().map(|c| [c.re, c.im]).collect()).collect()),
    }
}

fn poly_from_file(p: &PolyFile) -> Result<PolySpec> {
    if p.coeffs.len() > MAX_DEGREE + 1
        || p.eps_coeffs
            .as_ref()
            .map(|e| e.len() > MAX_DEGREE + 1 || e.iter().any(|q| q.len() > MAX_DEGREE + 1))
            .unwrap_or(false)
    {
        return Err(Error::Parse("polynomial degree out of range".into()));
    }
    let to_c = |a: &[f64; 2]| -> Result<C64> {
        if a[0].is_finite() && a[1].is_finite() {
            Ok(C64::new(a[0], a[1]))
        } else {
            Err(Error::Parse("non-finite polynomial coefficient".into()))
        }
    };
    Ok(PolySpec {
        coeffs: p.coeffs.iter().map(to_c).collect::<Result<_>>()?,
        eps_coeffs: match &p.eps_coeffs {
            None => None,
            Some(e) => Some(
                e.iter()
                    .map(|q| q.iter().map(to_c).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?,
            ),
        },
    })
}

fn one_indexed(map: &BTreeMap<String, i64>, len: usize, what: &str) -> Result<Vec<i64>> {
    let mut out = vec![0i64; len];
    let mut seen = vec![false; len];
    for (k, &v) in map {
        let idx: usize = k
            .parse()
            .map_err(|_| Error::Parse(format!("{what}: non-integer key {k:?}")))?;
        if idx < 1 || idx > len {
            return Err(Error::Parse(format!("{what}: key {idx} out of range 1..={len}")));
        }
        out[idx - 1] = v;
        seen[idx - 1] = true;
    }
    if seen.iter().all(|&s| s) {
        Ok(out)
    } else {
        Err(Error::Parse(format!("{what}: missing keys")))
    }
}

pub fn instance_to_json(inst: &ProblemInstance) -> Result<String> {
    let e = &inst.exponents;
    let idx = |v: &[i64]| -> BTreeMap<String, i64> {
        v.iter().enumerate().map(|(i, &x)| ((i + 1).to_string(), x)).collect()
    };
    let mut big = BTreeMap::new();
    for (l1, row) in e.big_delta.iter().enumerate() {
        big.insert((l1 + 1).to_string(), idx(row));
    }
    let mut rmap = BTreeMap::new();
    for (l1, row) in inst.polys.r.iter().enumerate() {
        let mut inner = BTreeMap::new();
        for (l2, pl) in row.iter().enumerate() {
            if !pl.is_zero() {
                inner.insert((l2 + 1).to_string(), poly_to_file(pl));
            }
        }
        if !inner.is_empty() {
            rmap.insert((l1 + 1).to_string(), inner);
        }
    }
    let f = InstanceFile {
        exponents: ExponentsFile {
            k1: e.k1,
            k2: e.k2,
            d1: e.d1,
            d2: e.d2,
            d: idx(&e.d),
            delta: idx(&e.delta),
            dt: idx(&e.dt),
            deltat: idx(&e.deltat),
            big_delta: big,
        },
        polys: PolysFile {
            q1: poly_to_file(&inst.polys.q1),
            q2: poly_to_file(&inst.polys.q2),
            r0: poly_to_file(&inst.polys.r0),
            r: rmap,
            rd1: poly_to_file(&inst.polys.rd1),
            rd2: poly_to_file(&inst.polys.rd2),
            p1: poly_to_file(&inst.polys.p1),
            p2: poly_to_file(&inst.polys.p2),
        },
        space: inst.space.clone(),
        gen: inst.gen.clone(),
    };
    Ok(serde_json::to_string_pretty(&f)?)
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let f: InstanceFile = serde_json::from_str(text)?;
    let e = &f.exponents;
    if e.d1 < 2 || e.d2 < 2 || e.d1 > MAX_ORDER as usize || e.d2 > MAX_ORDER as usize {
        return Err(Error::Parse("D1, D2 must be in 2..=64".into()));
    }
    let mut big_delta = vec![vec![0i64; e.d2]; e.d1];
    for (l1row, row) in &e.big_delta {
        let l1: usize = l1row
            .parse()
            .map_err(|_| Error::Parse(format!("Delta: non-integer key {l1row:?}")))?;
        if l1 < 1 || l1 > e.d1 {
            return Err(Error::Parse(format!("Delta: row {l1} out of range")));
        }
        for (l2key, &v) in row {
            let l2: usize = l2key
                .parse()
                .map_err(|_| Error::Parse(format!("Delta: non-integer key {l2key:?}")))?;
            if l2 < 1 || l2 > e.d2 {
                return Err(Error::Parse(format!("Delta: column {l2} out of range")));
            }
            big_delta[l1 - 1][l2 - 1] = v;
        }
    }
    let exponents = ExponentTables {
        k1: e.k1,
        k2: e.k2,
        d1: e.d1,
        d2: e.d2,
        d: one_indexed(&e.d, e.d1, "d")?,
        delta: one_indexed(&e.delta, e.d1, "delta")?,
        dt: one_indexed(&e.dt, e.d2, "dt")?,
        deltat: one_indexed(&e.deltat, e.d2, "deltat")?,
        big_delta,
    };
    exponents.check_dims()?;
    let mut r = vec![vec![PolySpec::default(); e.d2]; e.d1];
    for (l1row, row) in &f.polys.r {
        let l1: usize = l1row
            .parse()
            .map_err(|_| Error::Parse(format!("R: non-integer key {l1row:?}")))?;
        if l1 < 1 || l1 > e.d1 {
            return Err(Error::Parse(format!("R: row {l1} out of range")));
        }
        for (l2key, pf) in row {
            let l2: usize = l2key
                .parse()
                .map_err(|_| Error::Parse(format!("R: non-integer key {l2key:?}")))?;
            if l2 < 1 || l2 > e.d2 {
                return Err(Error::Parse(format!("R: column {l2} out of range")));
            }
            r[l1 - 1][l2 - 1] = poly_from_file(pf)?;
        }
    }
    let space = f.space;
    for v in [space.beta, space.mu, space.nu1, space.nu2, space.rho, space.eps0] {
        if !v.is_finite() {
            return Err(Error::Parse("non-finite space parameter".into()));
        }
    }
    if !(f.gen.k0.is_finite() && f.gen.t0.is_finite()) {
        return Err(Error::Parse("non-finite generator parameter".into()));
    }
    if f.gen.c_mask.len() > 4096 || f.gen.f_mask.len() > 4096 {
        return Err(Error::Parse("generator mask too large".into()));
    }
    Ok(ProblemInstance {
        exponents,
        polys: PolyData {
            q1: poly_from_file(&f.polys.q1)?,
            q2: poly_from_file(&f.polys.q2)?,
            r0: poly_from_file(&f.polys.r0)?,
            r,
            rd1: poly_from_file(&f.polys.rd1)?,
            rd2: poly_from_file(&f.polys.rd2)?,
            p1: poly_from_file(&f.polys.p1)?,
            p2: poly_from_file(&f.polys.p2)?,
        },
        space,
        gen: f.gen,
    })
}

pub fn report_to_json(rep: &ValidationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(rep)?)
}

/// Ready-made example instances; the CLI can emit them as starting points
/// and the test suites build on them.
pub mod examples {
    use super::*;

    /// k1=2, k2=3, D1=D2=2, delta=(1,2), d=(1,3), dt=(1,4), Delta_{1,1}=3,
    /// Q1=2-X^2, Q2=3-X^2, all other polynomials 1.
    pub fn inst_a() -> ProblemInstance {
        let one = PolySpec::constant(1.0);
        ProblemInstance {
            exponents: ExponentTables {
                k1: 2,
                k2: 3,
                d1: 2,
                d2: 2,
                d: vec![1, 3],
                delta: vec![1, 2],
                dt: vec![1, 4],
                deltat: vec![1, 2],
                big_delta: vec![vec![3, 0], vec![0, 5]],
            },
            polys: PolyData {
                q1: PolySpec::from_real(&[2.0, 0.0, -1.0]),
                q2: PolySpec::from_real(&[3.0, 0.0, -1.0]),
                r0: one.clone(),
                r: vec![vec![one.clone(), PolySpec::default()], vec![PolySpec::default(), PolySpec::default()]],
                rd1: one.clone(),
                rd2: one.clone(),
                p1: one.clone(),
                p2: one,
            },
            space: SpaceParams { beta: 1.0, mu: 2.0, nu1: 0.5, nu2: 0.5, rho: 0.5, eps0: 0.2 },
            gen: GeneratorSpec {
                k0: 1.0,
                t0: 2.0,
                profile: ModeProfile::PhaseTwist,
                c_mask: vec![(0, 0), (1, 0), (0, 1), (1, 1)],
                f_mask: vec![(1, 1), (2, 1), (1, 2), (2, 2)],
            },
        }
    }

    /// inst_a with C ≡ 0 and only F_{1,1} nonzero.
    pub fn inst_a0() -> ProblemInstance {
        let mut inst = inst_a();
        inst.gen.c_mask.clear();
        inst.gen.f_mask = vec![(1, 1)];
        inst
    }

    /// Deeper first axis: D1=3, delta=(1,2,3), d=(1,4,6); exercises the
    /// operator expansions with delta >= 3 and inner delta_l = 2.
    pub fn inst_b() -> ProblemInstance {
        let one = PolySpec::constant(1.0);
        let z = PolySpec::default;
        ProblemInstance {
            exponents: ExponentTables {
                k1: 2,
                k2: 3,
                d1: 3,
                d2: 2,
                d: vec![1, 4, 6],
                delta: vec![1, 2, 3],
                dt: vec![1, 4],
                deltat: vec![1, 2],
                big_delta: vec![vec![5, 0], vec![5, 0], vec![0, 7]],
            },
            polys: PolyData {
                q1: PolySpec::from_real(&[2.0, 0.0, -1.0]),
                q2: PolySpec::from_real(&[3.0, 0.0, -1.0]),
                r0: one.clone(),
                r: vec![vec![one.clone(), z()], vec![one.clone(), z()], vec![z(), z()]],
                rd1: one.clone(),
                rd2: one.clone(),
                p1: one.clone(),
                p2: one,
            },
            space: SpaceParams { beta: 1.0, mu: 2.0, nu1: 0.5, nu2: 0.5, rho: 0.5, eps0: 0.1 },
            gen: GeneratorSpec {
                k0: 1.0,
                t0: 2.0,
                profile: ModeProfile::PhaseTwist,
                c_mask: vec![(0, 0), (2, 0), (0, 1), (1, 1)],
                f_mask: vec![(1, 1), (2, 2)],
            },
        }
    }
}
