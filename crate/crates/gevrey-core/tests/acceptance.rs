//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (visible with --nocapture). Tolerances are pinned here.

use gevrey_core::borel::{
    beta_convolve, borel_monomial_mult, borel_transform, euler_borel_diff, operator_bound_check,
    relative_table_diff, BorelTable, ConvKernel, OpId,
};
use gevrey_core::fixed_point::picard_solve;
use gevrey_core::geometry::{build_good_covering, covering_check, default_time_sector, Sector};
use gevrey_core::instance::{examples, PolySpec};
use gevrey_core::mode_space::{ModeFunction, ModeGrid};
use gevrey_core::quad::tanh_sinh_01_c;
use gevrey_core::series::{generated_data, recursion_residual, solve_recursion, CoeffTable};
use gevrey_core::special::gamma_pos;
use gevrey_core::summation::{
    classify_pairs, decay_fit, evaluate_u, gevrey_fit, laplace_ray, series_reference, QuadratureSpec,
};
use gevrey_core::C64;
use std::sync::Arc;
use std::time::Instant;

fn report(n: u32, desc: &str, ok: bool, detail: &str) -> bool {
    println!("criterion {n} ({desc}): {} {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn grid129() -> Arc<ModeGrid> {
    let auto = ModeGrid::for_space(1.0, 2.0).unwrap();
    ModeGrid::new(auto.m_max, 129).unwrap()
}

#[test]
fn criterion_01_oracle_equivalence() {
    let grid = grid129();
    let eps_values = [C64::new(0.1, 0.0), C64::new(0.05, 0.0), C64::new(0.02, 0.01)];
    let mut ok = true;
    let mut detail = String::new();
    for (name, inst) in [("inst_a", examples::inst_a()), ("inst_a0", examples::inst_a0())] {
        for eps in eps_values {
            let t0 = Instant::now();
            let pic = picard_solve(&inst, eps, 10, 10, &grid).unwrap();
            let rec = solve_recursion(&inst, eps, 10, 10, &grid).unwrap();
            let w = borel_transform(&rec, inst.exponents.k1, inst.exponents.k2);
            let diff = relative_table_diff(&pic.omega.table, &w.table);
            let secs = t0.elapsed().as_secs_f64();
            if diff > 1e-9 || secs > 60.0 {
                ok = false;
            }
            detail = format!("{detail}{name}@{eps}: diff {diff:.2e} in {secs:.1}s; ");
        }
    }
    assert!(report(1, "fixed point equals transformed recursion", ok, &detail));
}

#[test]
fn criterion_02_transform_identities() {
    // coefficient maps against quadrature oracles on single entries, orders
    // up to 12, absolute/relative 1e-8
    let grid = ModeGrid::new(6.0, 33).unwrap();
    let eps = C64::new(0.05, 0.0);
    let (k1, k2) = (2u32, 3u32);
    let profile = ModeFunction::from_fn(grid.clone(), |m| {
        C64::from_polar((-m.abs()).exp() * (1.0 + m.abs()).powf(-2.0), 0.2 * m)
    });
    let single = |n1: usize, n2: usize| -> BorelTable {
        let mut t = CoeffTable::zero(16, 16, eps, grid.clone());
        t.set_entry(n1, n2, profile.clone());
        BorelTable { table: t, k1, k2 }
    };
    let zpow = |tau: C64, k: u32, x: f64| -> C64 {
        C64::from_polar(tau.norm().powf(k as f64 * x), k as f64 * tau.arg() * x)
    };
    let cpr = |v: f64, x: f64| C64::new(v, 0.0).powf(x);
    let eval = |w: &BorelTable, t1: C64, t2: C64, mi: usize| -> C64 {
        let t = &w.table;
        let mut acc = C64::new(0.0, 0.0);
        for n1 in (1..=t.n1_max).rev() {
            let mut inner = C64::new(0.0, 0.0);
            for n2 in (1..=t.n2_max).rev() {
                inner = inner * t2 + t.entry(n1, n2).values[mi];
            }
            acc = acc * t1 + inner * t2;
        }
        acc * t1
    };
    let tau1 = C64::new(0.11, 0.06);
    let tau2 = C64::new(0.07, -0.05);
    let mi = 9;
    let mut worst: f64 = 0.0;
    for n in [1usize, 3, 7, 12] {
        // differential identity: multiply by k tau^k
        let w = single(n, 2);
        let d = euler_borel_diff(&w, 1);
        let lhs = eval(&d, tau1, tau2, mi);
        let rhs = eval(&w, tau1, tau2, mi) * tau1.powi(k1 as i32) * k1 as f64;
        worst = worst.max((lhs - rhs).norm() / rhs.norm().max(1e-12));
        // monomial identity against quadrature
        for m_shift in [1usize, 3] {
            if n + m_shift > 16 {
                continue;
            }
            let mapped = borel_monomial_mult(&w, m_shift, 0);
            let a = m_shift as f64 / k1 as f64;
            let b = n as f64 / k1 as f64;
            let bint = tanh_sinh_01_c(|u, um| cpr(um, a - 1.0) * cpr(u, b - 1.0));
            let oracle = zpow(tau1, k1, a + b) * bint / gamma_pos(a)
                * tau2.powi(2)
                * w.table.entry(n, 2).values[mi];
            let got = eval(&mapped, tau1, tau2, mi);
            worst = worst.max((got - oracle).norm() / oracle.norm().max(1e-12));
        }
    }
    // product identity against quadrature
    let one = PolySpec::constant(1.0);
    for (a1, b1) in [(1usize, 1usize), (4, 3), (6, 6)] {
        let phi = single(a1, 2);
        let psi = single(b1, 3);
        let kern = ConvKernel::Poly { q1: &one, q2: &one, divisor: &one };
        let bb = beta_convolve(&phi, &psi, &kern).unwrap();
        let sp = gevrey_core::mode_space::convolve(&profile, &profile).unwrap();
        let quad_axis = |tau: C64, k: u32, a: usize, b: usize| -> C64 {
            let aa = a as f64 / k as f64;
            let bb_ = b as f64 / k as f64;
            let bint = tanh_sinh_01_c(|u, um| cpr(um, aa - 1.0) * cpr(u, bb_ - 1.0));
            zpow(tau, k, aa + bb_) * bint
        };
        let oracle = quad_axis(tau1, k1, a1, b1) * quad_axis(tau2, k2, 2, 3) * sp.values[mi];
        let got = eval(&bb, tau1, tau2, mi);
        worst = worst.max((got - oracle).norm() / oracle.norm().max(1e-12));
    }
    let ok = worst <= 1e-8;
    assert!(report(2, "transform identities vs quadrature", ok, &format!("worst {worst:.2e}")));
}

#[test]
fn criterion_03_laplace_moment_round_trip() {
    let r_cut = 0.5;
    let q = QuadratureSpec::with_r_cut(r_cut);
    let mut worst: f64 = 0.0;
    for k in [1u32, 2, 3] {
        for n in 1..=8usize {
            // stay inside the certified part of |T| <= 0.2 r_cut: the moment
            // integrand needs (r_cut/|T|)^k beyond its Gamma mean
            let cap = r_cut / (n as f64 / k as f64 + 45.0).powf(1.0 / k as f64);
            let t_abs = (0.2 * r_cut).min(cap);
            for arg in [0.0, 0.15] {
                let t = C64::from_polar(t_abs, arg);
                let g = gamma_pos(n as f64 / k as f64);
                let f = move |u: C64| u.powi(n as i32) / g;
                let v = laplace_ray(&f, k, t.arg(), t, &q).unwrap();
                let expect = t.powi(n as i32);
                worst = worst.max((v.value - expect).norm() / expect.norm());
            }
        }
    }
    let ok = worst <= 1e-6;
    assert!(report(3, "Laplace moment identity", ok, &format!("worst rel err {worst:.2e}")));
}

#[test]
fn criterion_04_operator_scaling() {
    let inst = examples::inst_a();
    let eps: Vec<f64> = (0..7).map(|i| 1e-3 * 10f64.powf(i as f64 / 3.0)).collect();
    let checks = [
        (OpId::P1 { shift1: 1, shift2: 1 }, "P1 gamma=1/k"),
        (OpId::P1 { shift1: 2, shift2: 3 }, "P1 gamma=1"),
        (OpId::P2 { chi1: 0, xi1: 0, chi2: 0, xi2: 0, gamma11: 0.0, gamma12: 0.0 }, "P2"),
        (OpId::P3, "P3"),
    ];
    let mut ok = true;
    let mut detail = String::new();
    for (op, name) in checks {
        let rep = operator_bound_check(&inst, op, &eps).unwrap();
        let err = (rep.slope - rep.expected_slope).abs();
        if !rep.valid || err > 0.15 {
            ok = false;
        }
        detail = format!("{detail}{name}: slope {:.3} vs {:.1}; ", rep.slope, rep.expected_slope);
    }
    assert!(report(4, "operator epsilon-scaling slopes", ok, &detail));
}

#[test]
fn criterion_05_gevrey_order_recovery() {
    let mut ok = true;
    let mut detail = String::new();
    for k in [1.0f64, 2.0, 3.0] {
        let a: Vec<f64> = (1..=40).map(|n| gamma_pos(1.0 + n as f64 / k)).collect();
        let fit = gevrey_fit(&a).unwrap();
        if (fit.k_est - k).abs() > 0.1 * k {
            ok = false;
        }
        detail = format!("{detail}G(1+n/{k}): {:.3}; ", fit.k_est);
    }
    let a: Vec<f64> = (1..=30).map(|n| gamma_pos(1.0 + n as f64)).collect();
    let fit = gevrey_fit(&a).unwrap();
    if (fit.k_est - 1.0).abs() > 0.1 {
        ok = false;
    }
    detail = format!("{detail}n!: {:.3}", fit.k_est);
    assert!(report(5, "Gevrey order recovery", ok, &detail));
}

#[test]
fn criterion_06_decay_level_recovery() {
    let eps: Vec<f64> = (0..14).map(|i| 0.2 * 10f64.powf(i as f64 / 12.0)).collect();
    let (k0, m0, a0) = (2.0, 2.0, 3.0);
    let noise_free: Vec<(f64, f64)> =
        eps.iter().map(|&e| (e, a0 * (-m0 / e.powf(k0)).exp())).collect();
    let fit = decay_fit(&noise_free).unwrap();
    let mut ok = (fit.k_est - k0).abs() <= 0.05 * k0
        && (fit.m - m0).abs() <= 0.05 * m0
        && (fit.k_amp - a0).abs() <= 0.05 * a0;
    let mut detail = format!("single level: ({:.3},{:.3},{:.3}); ", fit.k_est, fit.m, fit.k_amp);
    // two-level mixture at small eps classifies to the slower level
    let mixed: Vec<(f64, f64)> = eps
        .iter()
        .map(|&e| (e, (-2.0 / (e * e)).exp() + 0.7 * (-1.5 / (e * e * e)).exp()))
        .collect();
    let fit = decay_fit(&mixed).unwrap();
    if (fit.k_est - 2.0).abs() > 0.3 {
        ok = false;
    }
    detail = format!("{detail}mixture k: {:.3}", fit.k_est);
    assert!(report(6, "decay level recovery", ok, &detail));
}

#[test]
fn criterion_07_covering_certification() {
    let inst = examples::inst_a();
    let grid = grid129();
    let mut ok = true;
    let mut detail = String::new();
    for (s1, s2) in [(2usize, 3usize), (3, 3)] {
        let cov = build_good_covering(
            &inst,
            s1,
            s2,
            inst.space.eps0,
            70f64.to_radians(),
            default_time_sector(),
            default_time_sector(),
            &grid,
        )
        .unwrap();
        let rep = covering_check(&cov, 0.1f64.to_radians());
        if !rep.pass {
            ok = false;
        }
        detail = format!(
            "{detail}({s1},{s2}): cover [{},{}], opening {}, containment {}; ",
            rep.min_cover, rep.max_cover, rep.opening_ok, rep.containment_ok
        );
    }
    assert!(report(7, "good covering certification", ok, &detail));
}

#[test]
fn criterion_08_solution_evaluation_consistency() {
    let inst = examples::inst_a0();
    let grid = grid129();
    let eps_abs = 0.1;
    let cov = build_good_covering(
        &inst,
        2,
        3,
        inst.space.eps0,
        70f64.to_radians(),
        default_time_sector(),
        Sector { direction: 0.0, opening: 6f64.to_radians(), radius: Some(1.0) },
        &grid,
    )
    .unwrap();
    let cell = (0usize, 0usize);
    let cell_dir = cov.cells.iter().find(|c| (c.p1, c.p2) == cell).unwrap().sector.direction;
    let eps = C64::from_polar(eps_abs, cell_dir + 0.05);
    let pic = picard_solve(&inst, eps, 10, 10, &grid).unwrap();
    let rec = solve_recursion(&inst, eps, 10, 10, &grid).unwrap();
    let q = QuadratureSpec::for_instance(&inst);
    let mut state = 0xace5_u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let t_cap = 0.1 * inst.space.rho / eps_abs;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t1 = C64::from_polar(t_cap * (0.3 + 0.7 * next()), (next() - 0.5) * 4f64.to_radians());
        let t2 = C64::from_polar(t_cap * (0.3 + 0.7 * next()), (next() - 0.5) * 4f64.to_radians());
        let z = C64::new((next() - 0.5) * 0.4, (next() - 0.5) * 0.3);
        let via_laplace = evaluate_u(&inst, &pic.omega, &cov, cell, t1, t2, z, eps, &q).unwrap();
        let via_series = series_reference(&inst, &rec, eps * t1, eps * t2, z).unwrap();
        let err = (via_laplace - via_series).norm() / via_series.norm().max(1e-12);
        worst = worst.max(err);
    }
    let ok = worst <= 1e-5;
    assert!(report(8, "solution evaluation vs truncated series", ok, &format!("worst rel err {worst:.2e}")));
}

#[test]
fn criterion_09_structural_classification() {
    let inst = examples::inst_a();
    let grid = grid129();
    let cov = build_good_covering(
        &inst,
        2,
        3,
        inst.space.eps0,
        70f64.to_radians(),
        default_time_sector(),
        default_time_sector(),
        &grid,
    )
    .unwrap();
    let cls = classify_pairs(&cov);
    let expect_uk2 = [((0, 0), (0, 1)), ((0, 1), (0, 2)), ((1, 0), (1, 1)), ((1, 1), (1, 2))];
    let expect_uk1 = [((0, 2), (1, 0)), ((0, 0), (1, 2))];
    let mut ok = cls.uk2.len() == expect_uk2.len() && cls.uk1.len() == expect_uk1.len();
    for p in expect_uk2 {
        ok &= cls.uk2.contains(&p);
    }
    for p in expect_uk1 {
        ok &= cls.uk1.contains(&p);
    }
    ok &= cls.u0.len() == 9;
    assert!(report(
        9,
        "classification reproduces the case table",
        ok,
        &format!("|Uk2|={} |Uk1|={} |U0|={}", cls.uk2.len(), cls.uk1.len(), cls.u0.len())
    ));
}

#[test]
fn criterion_10_recursion_residual() {
    let grid = grid129();
    let eps = C64::new(0.05, 0.0);
    let mut ok = true;
    let mut detail = String::new();
    for (name, inst) in [("inst_a", examples::inst_a()), ("inst_a0", examples::inst_a0())] {
        let u = solve_recursion(&inst, eps, 9, 9, &grid).unwrap();
        let data = generated_data(&inst, 9, 9, &grid);
        let r = recursion_residual(&inst, &u, &data, 8, 8).unwrap();
        if r > 1e-10 {
            ok = false;
        }
        detail = format!("{detail}{name}: {r:.2e}; ");
    }
    assert!(report(10, "recursion residual through order (8,8)", ok, &detail));
}
