//! Sector geometry in the Borel plane and the parameter plane: roots of the
//! divisor polynomials, admissibility of Laplace directions against those
//! roots, and generated good coverings of the punctured parameter disc with
//! their multidirection assignments.

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::mode_space::ModeGrid;
use crate::C64;
use serde::{Deserialize, Serialize};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(TAU);
    if x > std::f64::consts::PI {
        x -= TAU;
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    /// bisecting direction, radians
    pub direction: f64,
    /// full opening, radians
    pub opening: f64,
    /// None marks an unbounded sector
    pub radius: Option<f64>,
}

impl Sector {
    /// Angular membership, half-open: includes the counterclockwise edge.
    pub fn contains_angle(&self, theta: f64) -> bool {
        let d = wrap_angle(theta - self.direction);
        d > -self.opening / 2.0 && d <= self.opening / 2.0
    }

    pub fn contains(&self, z: C64) -> bool {
        if z.norm() == 0.0 {
            return false;
        }
        if let Some(r) = self.radius {
            if z.norm() >= r {
                return false;
            }
        }
        self.contains_angle(z.arg())
    }

    /// Whether the angular footprints of two sectors intersect.
    pub fn overlaps(&self, other: &Sector) -> bool {
        wrap_angle(self.direction - other.direction).abs() < (self.opening + other.opening) / 2.0
    }
}

/// Roots of P_{m,j}(τ) = Q_j(im) k_j - R_{Dj}(im) k_j^{delta} τ^{(delta-1)k_j}
/// at one mode node, by the radial root formula.
pub fn pm_roots(inst: &ProblemInstance, axis: u8, m: f64, eps: C64) -> Result<Vec<C64>> {
    let ex = &inst.exponents;
    let (q, rd, k, delta) = match axis {
        1 => (&inst.polys.q1, &inst.polys.rd1, ex.k1, ex.delta[ex.d1 - 1]),
        _ => (&inst.polys.q2, &inst.polys.rd2, ex.k2, ex.deltat[ex.d2 - 1]),
    };
    let s = (delta - 1) * k as i64;
    if s <= 0 {
        return Ok(Vec::new());
    }
    let rv = rd.eval_im(m, eps);
    if rv.norm() == 0.0 {
        return Err(Error::InvalidInstance(format!(
            "degenerate: no roots (R_D{axis}(im) = 0 at m = {m})"
        )));
    }
    let z = q.eval_im(m, eps) * k as f64 / (rv * (k as f64).powi(delta as i32));
    let modulus = z.norm().powf(1.0 / s as f64);
    let base_arg = z.arg() / s as f64;
    Ok((0..s)
        .map(|l| C64::from_polar(modulus, base_arg + TAU * l as f64 / s as f64))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionReport {
    pub axis: u8,
    pub direction: f64,
    pub rho: f64,
    pub m1: f64,
    pub m2: f64,
    pub c_p: f64,
    pub pass: bool,
}

const ADMISSIBLE_THRESHOLD: f64 = 1e-6;

/// Admissibility of one Laplace direction: distances from the sampled ray
/// and disc boundary to every divisor root over the grid, and the resulting
/// lower bound on |P_{m,j}| relative to its dominating weight.
pub fn direction_report(
    inst: &ProblemInstance,
    axis: u8,
    direction: f64,
    rho: f64,
    grid: &ModeGrid,
    ray_samples: usize,
    eps: C64,
) -> Result<DirectionReport> {
    if rho <= 0.0 {
        return Err(Error::Parse("direction_report needs rho > 0".into()));
    }
    let ex = &inst.exponents;
    let (k, delta, rd, q) = match axis {
        1 => (ex.k1, ex.delta[ex.d1 - 1], &inst.polys.rd1, &inst.polys.q1),
        _ => (ex.k2, ex.deltat[ex.d2 - 1], &inst.polys.rd2, &inst.polys.q2),
    };
    // sample set: ray outward from the disc, then the disc boundary
    let n_ray = ray_samples.max(8);
    let mut taus: Vec<C64> = Vec::with_capacity(n_ray + 64);
    let r_hi = 16.0 * rho.max(1.0);
    for i in 0..n_ray {
        let r = rho * (r_hi / rho).powf(i as f64 / (n_ray - 1) as f64);
        taus.push(C64::from_polar(r, direction));
    }
    for i in 0..64 {
        taus.push(C64::from_polar(rho, TAU * i as f64 / 64.0));
    }

    // interior disc samples catch divisor zeros inside the disc
    let mut disc: Vec<C64> = Vec::with_capacity(8 * 16);
    for ir in 1..=8 {
        for ia in 0..16 {
            disc.push(C64::from_polar(rho * ir as f64 / 8.0, TAU * ia as f64 / 16.0));
        }
    }

    let mut m1: f64 = f64::INFINITY;
    let mut c_p: f64 = f64::INFINITY;
    // best-witness root for the |q|-relative bound
    let mut m2_per_root: Vec<f64> = Vec::new();
    for &m in grid.nodes() {
        let roots = pm_roots(inst, axis, m, eps)?;
        if m2_per_root.is_empty() {
            m2_per_root = vec![f64::INFINITY; roots.len()];
        }
        let rdv = rd.eval_im(m, eps);
        let qv = q.eval_im(m, eps);
        let b = rdv * (k as f64).powi(delta as i32);
        // orthogonal projections of the roots onto the ray; a root sitting on
        // the ray is then hit exactly
        let mut proj: Vec<C64> = Vec::new();
        for (ri, &root) in roots.iter().enumerate() {
            // minimum over the closed disc is available in closed form
            let gap = (root.norm() - rho).max(0.0);
            m1 = m1.min(gap / (1.0 + rho.min(root.norm())));
            m2_per_root[ri] = m2_per_root[ri].min(gap / root.norm().max(1e-300));
            let r_star = root.norm() * wrap_angle(root.arg() - direction).cos();
            if r_star > 0.0 {
                proj.push(C64::from_polar(r_star, direction));
            }
        }
        for &t in taus.iter().chain(&disc).chain(&proj) {
            for (ri, &root) in roots.iter().enumerate() {
                let dist = (t - root).norm();
                m1 = m1.min(dist / (1.0 + t.norm()));
                m2_per_root[ri] = m2_per_root[ri].min(dist / root.norm().max(1e-300));
            }
            // |P_{m,j}(τ)| over its weight |R(im)| (1+|τ|^k)^{(delta-1)-1/k}
            let pv = qv * k as f64 - b * t.powi(((delta - 1) * k as i64) as i32);
            let wgt = rdv.norm() * (1.0 + t.norm().powi(k as i32)).powf(delta as f64 - 1.0 - 1.0 / k as f64);
            c_p = c_p.min(pv.norm() / wgt.max(1e-300));
        }
    }
    let m2 = m2_per_root.iter().copied().fold(0.0, f64::max);
    let pass = m1 > ADMISSIBLE_THRESHOLD && m2 > ADMISSIBLE_THRESHOLD && c_p > ADMISSIBLE_THRESHOLD;
    Ok(DirectionReport { axis, direction: wrap_angle(direction), rho, m1, m2, c_p, pass })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringCell {
    pub p1: usize,
    pub p2: usize,
    pub sector: Sector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoodCovering {
    pub sigma1: usize,
    pub sigma2: usize,
    pub k1: u32,
    pub k2: u32,
    pub eps0: f64,
    pub cells: Vec<CoveringCell>,
    /// Laplace directions per first index
    pub d1: Vec<f64>,
    /// Laplace directions per second index
    pub d2: Vec<f64>,
    /// openings of the bounded direction sectors that must contain eps*t_j
    pub theta1: f64,
    pub theta2: f64,
    /// admissible bending half-widths for per-point direction selection
    pub bend1: f64,
    pub bend2: f64,
    /// bounded time sectors
    pub t1: Sector,
    pub t2: Sector,
}

fn group_members(sigma2: usize, n: usize, axis: u8, p: usize) -> Vec<usize> {
    (0..n)
        .filter(|s| if axis == 1 { s / sigma2 == p } else { s % sigma2 == p })
        .collect()
}

/// Minimal enclosing arc of a set of angles: (mid, half_width).
fn enclosing_arc(angles: &[f64]) -> Option<(f64, f64)> {
    if angles.is_empty() {
        return None;
    }
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(TAU)).collect();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = a.len();
    let mut best_gap = -1.0;
    let mut best_at = 0;
    for i in 0..n {
        let next = if i + 1 == n { a[0] + TAU } else { a[i + 1] };
        if next - a[i] > best_gap {
            best_gap = next - a[i];
            best_at = i;
        }
    }
    let width = TAU - best_gap;
    if width >= TAU - 1e-9 {
        return None;
    }
    let start = if best_at + 1 == n { a[0] } else { a[best_at + 1] };
    Some(((start + width / 2.0).rem_euclid(TAU), width / 2.0))
}

/// Root arguments over the whole grid for one axis.
fn root_arguments(inst: &ProblemInstance, axis: u8, grid: &ModeGrid, eps: C64) -> Result<Vec<f64>> {
    let mut args = Vec::new();
    for &m in grid.nodes() {
        for r in pm_roots(inst, axis, m, eps)? {
            args.push(r.arg().rem_euclid(TAU));
        }
    }
    args.sort_by(|x, y| x.partial_cmp(y).unwrap());
    args.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(args)
}

fn min_root_distance(args: &[f64], d: f64) -> f64 {
    args.iter()
        .map(|&a| wrap_angle(d - a).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Picks an admissible direction near `nominal`: keeps it when the ray
/// passes, otherwise walks outward in 0.25-degree steps and prefers, among
/// equally near candidates, the one with maximal clearance from the root
/// arguments.
fn snap_direction(
    inst: &ProblemInstance,
    axis: u8,
    nominal: f64,
    rho: f64,
    grid: &ModeGrid,
    eps: C64,
    root_args: &[f64],
) -> Result<f64> {
    let probe = |d: f64| -> Result<bool> {
        Ok(direction_report(inst, axis, d, rho, grid, 24, eps)?.pass)
    };
    if probe(nominal)? {
        return Ok(nominal);
    }
    let step = 0.25f64.to_radians();
    for i in 1..=(TAU / step) as usize {
        let off = step * i as f64;
        let cands = [nominal + off, nominal - off];
        let mut passing: Vec<f64> = Vec::new();
        for c in cands {
            if probe(c)? {
                passing.push(c);
            }
        }
        if !passing.is_empty() {
            passing.sort_by(|a, b| {
                min_root_distance(root_args, *b)
                    .partial_cmp(&min_root_distance(root_args, *a))
                    .unwrap()
            });
            return Ok(passing[0]);
        }
    }
    Err(Error::NoAdmissibleCovering(format!(
        "no admissible direction on axis {axis} near {nominal}"
    )))
}

/// Builds a covering of sigma1*sigma2 equally spaced sectors of the given
/// opening with multidirections assigned per index and snapped to admissible
/// Laplace directions.
#[allow(clippy::too_many_arguments)]
pub fn build_good_covering(
    inst: &ProblemInstance,
    sigma1: usize,
    sigma2: usize,
    eps0: f64,
    opening: f64,
    t1: Sector,
    t2: Sector,
    grid: &ModeGrid,
) -> Result<GoodCovering> {
    let (k1, k2) = (inst.exponents.k1, inst.exponents.k2);
    if sigma1 * sigma2 < 2 {
        return Err(Error::NoAdmissibleCovering("need at least two sectors".into()));
    }
    if opening <= std::f64::consts::PI / k2 as f64 {
        return Err(Error::NoAdmissibleCovering(format!(
            "opening {opening} must exceed pi/k2 = {}",
            std::f64::consts::PI / k2 as f64
        )));
    }
    let n = sigma1 * sigma2;
    let spacing = TAU / n as f64;
    if opening <= spacing {
        return Err(Error::NoAdmissibleCovering(format!(
            "opening {opening} leaves coverage gaps at spacing {spacing}"
        )));
    }
    if opening >= 2.0 * spacing {
        return Err(Error::NoAdmissibleCovering(format!(
            "opening {opening} forces triple overlaps at spacing {spacing}"
        )));
    }
    let cells: Vec<CoveringCell> = (0..n)
        .map(|s| CoveringCell {
            p1: s / sigma2,
            p2: s % sigma2,
            sector: Sector {
                direction: wrap_angle(spacing * s as f64),
                opening,
                radius: Some(eps0),
            },
        })
        .collect();

    let eps_probe = C64::new(eps0 * 0.5, 0.0);
    let rho = inst.space.rho;
    let mut d = [Vec::new(), Vec::new()];
    let mut theta = [0.0f64; 2];
    let mut bend = [0.0f64; 2];
    for (ai, (axis, sigma, tsec)) in [(1u8, sigma1, &t1), (2u8, sigma2, &t2)].iter().enumerate() {
        let root_args = root_arguments(inst, *axis, grid, eps_probe)?;
        let mut dirs = Vec::with_capacity(*sigma);
        let mut theta_need = std::f64::consts::PI / (if *axis == 1 { k1 } else { k2 }) as f64 * 1.02;
        for p in 0..*sigma {
            let members = group_members(sigma2, n, *axis, p);
            let mut edges = Vec::new();
            for &s in &members {
                let c = &cells[s].sector;
                edges.push(c.direction - opening / 2.0);
                edges.push(c.direction + opening / 2.0);
            }
            let (mid, _half) = enclosing_arc(&edges)
                .ok_or_else(|| Error::NoAdmissibleCovering("cell group spans the full circle".into()))?;
            let nominal = wrap_angle(mid + tsec.direction);
            let snapped = snap_direction(inst, *axis, nominal, rho, grid, eps_probe, &root_args)?;
            // required opening so that every member corner stays inside
            let mut need: f64 = 0.0;
            for e in &edges {
                for te in [tsec.direction - tsec.opening / 2.0, tsec.direction + tsec.opening / 2.0] {
                    need = need.max(wrap_angle(e + te - snapped).abs());
                }
            }
            theta_need = theta_need.max(2.0 * need + 2f64.to_radians());
            dirs.push(snapped);
        }
        // distinct directions per index
        for i in 0..dirs.len() {
            for j in i + 1..dirs.len() {
                if wrap_angle(dirs[i] - dirs[j]).abs() < 1e-9 {
                    return Err(Error::NoAdmissibleCovering(
                        "multidirections collapsed to a single ray".into(),
                    ));
                }
            }
        }
        let clearance = dirs
            .iter()
            .map(|&dd| min_root_distance(&root_args, dd))
            .fold(f64::INFINITY, f64::min);
        d[ai] = dirs;
        theta[ai] = theta_need;
        bend[ai] = (clearance - 2f64.to_radians()).max(1f64.to_radians());
    }

    Ok(GoodCovering {
        sigma1,
        sigma2,
        k1,
        k2,
        eps0,
        cells,
        d1: d[0].clone(),
        d2: d[1].clone(),
        theta1: theta[0],
        theta2: theta[1],
        bend1: bend[0],
        bend2: bend[1],
        t1,
        t2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoveringCheckReport {
    pub coverage_ok: bool,
    pub no_triple_overlap: bool,
    pub opening_ok: bool,
    pub containment_ok: bool,
    pub min_cover: usize,
    pub max_cover: usize,
    pub pass: bool,
    pub detail: String,
}

/// Samples the circle at the given angular step and verifies coverage by one
/// or two sectors, the opening condition, and the containment of eps*t_j in
/// the direction sectors at sampled corners.
pub fn covering_check(cov: &GoodCovering, angular_step: f64) -> CoveringCheckReport {
    let steps = (TAU / angular_step).ceil() as usize;
    let mut min_cover = usize::MAX;
    let mut max_cover = 0usize;
    for i in 0..steps {
        let th = TAU * i as f64 / steps as f64;
        let c = cov.cells.iter().filter(|cell| cell.sector.contains_angle(th)).count();
        min_cover = min_cover.min(c);
        max_cover = max_cover.max(c);
    }
    let coverage_ok = min_cover >= 1;
    let no_triple_overlap = max_cover <= 2;
    let opening_ok = cov
        .cells
        .iter()
        .all(|c| c.sector.opening > std::f64::consts::PI / cov.k2 as f64)
        && cov.theta1 > std::f64::consts::PI / cov.k1 as f64
        && cov.theta2 > std::f64::consts::PI / cov.k2 as f64;

    let mut containment_ok = true;
    let mut detail = String::new();
    for cell in &cov.cells {
        let eps_args = [
            cell.sector.direction - cell.sector.opening / 2.0 + 1e-9,
            cell.sector.direction,
            cell.sector.direction + cell.sector.opening / 2.0 - 1e-9,
        ];
        for (dirs, theta, tsec, p) in [
            (&cov.d1, cov.theta1, &cov.t1, cell.p1),
            (&cov.d2, cov.theta2, &cov.t2, cell.p2),
        ] {
            let dp = dirs[p];
            for &ea in &eps_args {
                for ta in [
                    tsec.direction - tsec.opening / 2.0,
                    tsec.direction + tsec.opening / 2.0,
                ] {
                    if wrap_angle(ea + ta - dp).abs() >= theta / 2.0 {
                        containment_ok = false;
                        if detail.is_empty() {
                            detail = format!(
                                "cell ({},{}) corner {} + {} escapes direction {}",
                                cell.p1, cell.p2, ea, ta, dp
                            );
                        }
                    }
                }
            }
        }
    }
    let pass = coverage_ok && no_triple_overlap && opening_ok && containment_ok;
    CoveringCheckReport {
        coverage_ok,
        no_triple_overlap,
        opening_ok,
        containment_ok,
        min_cover,
        max_cover,
        pass,
        detail,
    }
}

pub fn covering_to_json(cov: &GoodCovering) -> Result<String> {
    Ok(serde_json::to_string_pretty(cov)?)
}

pub fn covering_from_json(text: &str) -> Result<GoodCovering> {
    let cov: GoodCovering = serde_json::from_str(text)?;
    if cov.cells.is_empty()
        || cov.cells.len() != cov.sigma1 * cov.sigma2
        || cov.d1.len() != cov.sigma1
        || cov.d2.len() != cov.sigma2
        || cov.k1 == 0
        || cov.k2 == 0
        || !cov.eps0.is_finite()
        || cov.cells.iter().any(|c| {
            c.p1 >= cov.sigma1
                || c.p2 >= cov.sigma2
                || !c.sector.direction.is_finite()
                || !(c.sector.opening > 0.0)
        })
    {
        return Err(Error::Parse("covering file malformed".into()));
    }
    Ok(cov)
}

/// Default bounded time sector used by the covering generator.
pub fn default_time_sector() -> Sector {
    Sector { direction: 0.0, opening: 6f64.to_radians(), radius: Some(1.0) }
}
