//! Property tests for the invariants every module promises.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use qls_core::cutoff::CutoffProfile;
use qls_core::evolve::{evolve_linear, reverse_time, Direction, ParaGenerator, StepOptions, TimeGrid, Trajectory};
use qls_core::field::{pair_dot, sobolev_norm};
use qls_core::geometry::{check_gcc, ControlRegion, GccOptions, Shape};
use qls_core::grid::Projection;
use qls_core::hum::{ControlSetup, HumOperators};
use qls_core::model::{compute_coefficients, Nonlinearity};
use qls_core::probe::{seeded_field, smooth_field};
use qls_core::quantize::{bony_weyl_quantize, Quantizer};
use qls_core::symbol::{TorusSymbol, XiPoly};
use qls_core::{Field, TorusGrid, C64};

fn grid_strategy() -> impl Strategy<Value = TorusGrid> {
    (1usize..=2, prop::sample::select(vec![8usize, 16])).prop_map(|(d, n)| TorusGrid::new(d, n).unwrap())
}

fn background(g: TorusGrid, tg: &TimeGrid, seed: u64, amp: f64) -> Trajectory {
    Trajectory {
        times: (0..=tg.steps).map(|n| tg.time(n)).collect(),
        states: (0..=tg.steps).map(|n| smooth_field(g, seed + n as u64, 2.0, amp)).collect(),
    }
}

fn small_gcc() -> GccOptions {
    GccOptions { l_max: 10.0, q_max: 6, n_dirs: 32, n_starts: 48 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(g in grid_strategy(), seed in any::<u64>()) {
        let f = seeded_field(g, seed);
        let quad = f.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / g.len() as f64;
        let coef = f.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
        prop_assert!((quad - coef).abs() <= 1e-12 * coef);
    }

    #[test]
    fn sobolev_monotone_and_conjugation_invariant(g in grid_strategy(), seed in any::<u64>(), s in -2.0f64..4.0, ds in 0.0f64..3.0) {
        let f = seeded_field(g, seed);
        prop_assert!(sobolev_norm(&f, s) <= sobolev_norm(&f, s + ds) * (1.0 + 1e-14));
        let (a, b) = (sobolev_norm(&f.conj(), s), sobolev_norm(&f, s));
        prop_assert!((a - b).abs() <= 1e-14 * b);
    }

    #[test]
    fn identity_calibration_is_exact(g in grid_strategy(), seed in any::<u64>(), eps in 0.1f64..0.9) {
        let f = seeded_field(g, seed);
        let cut = CutoffProfile::new(eps).unwrap();
        prop_assert_eq!(bony_weyl_quantize(&TorusSymbol::one(g), &f, &cut).unwrap().field, f);
    }

    #[test]
    fn real_symbols_are_self_adjoint_and_banded(seed in any::<u64>(), eps in 0.2f64..0.8) {
        let g = TorusGrid::new(2, 8).unwrap();
        let c = smooth_field(g, seed, 1.5, 0.5).real_part();
        let sym = TorusSymbol::separable(c, XiPoly::xi_sq(2), true);
        let cut = CutoffProfile::new(eps).unwrap();
        let m = Quantizer::new(&sym, Some(&cut), Projection::Full).materialize().unwrap();
        let norm = m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut defect = 0.0f64;
        for j in 0..g.len() {
            for k in 0..g.len() {
                defect += (m[j][k] - m[k][j].conj()).norm_sqr();
                let (fj, fk) = (g.freq(j), g.freq(k));
                let d = (((fj[0] - fk[0]).pow(2) + (fj[1] - fk[1]).pow(2)) as f64).sqrt();
                let s = (1.0 + ((fj[0] + fk[0]).pow(2) + (fj[1] + fk[1]).pow(2)) as f64).sqrt();
                if d > 1.9 * eps * s {
                    prop_assert_eq!(m[j][k], C64::new(0.0, 0.0));
                }
            }
        }
        prop_assert!(defect.sqrt() <= 1e-10 * norm);
    }

    #[test]
    fn quantization_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let g = TorusGrid::new(2, 16).unwrap();
        let c = smooth_field(g, seed, 2.0, 0.3);
        let sym = TorusSymbol::separable(c, XiPoly::xi_sq(2), false);
        let cut = CutoffProfile::default();
        let (x, y) = (seeded_field(g, seed ^ 1), seeded_field(g, seed ^ 2));
        let q = |f: &Field| bony_weyl_quantize(&sym, f, &cut).unwrap().field;
        let lhs = q(&x.scale_real(a).add(&y));
        let rhs = q(&x).scale_real(a).add(&q(&y));
        prop_assert!(lhs.sub(&rhs).l2_norm() <= 1e-12 * rhs.l2_norm().max(1.0));
    }

    #[test]
    fn lambda_at_least_one_and_one_on_zeros(seed in any::<u64>(), amp in 0.0f64..0.5) {
        let g = TorusGrid::new(2, 16).unwrap();
        // vanishes on the line x₀ = 0
        let u = smooth_field(g, seed, 2.0, 1.0).mul(&Field::from_fn(g, |x| C64::new(x[0].sin(), 0.0))).scale_real(amp);
        let c = compute_coefficients(&u, &Nonlinearity::new(vec![1.0, 0.5], vec![1.0]).unwrap());
        let uv = u.values();
        for (x, &l) in c.lambda_values.iter().enumerate() {
            prop_assert!(l >= 1.0);
            if uv[x].norm() < 1e-15 {
                prop_assert!((l - 1.0).abs() <= 1e-14);
            }
            prop_assert!((c.s1_values[x].powi(2) - c.s2_values[x].norm_sqr() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn reverse_time_is_an_involution(seed in any::<u64>(), steps in 1usize..12) {
        let g = TorusGrid::new(1, 8).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let tr = background(g, &tg, seed % 1_000_000, 1.0);
        let twice = reverse_time(&reverse_time(&tr));
        for (a, b) in twice.times.iter().zip(&tr.times) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        for (a, b) in twice.states.iter().zip(&tr.states) {
            prop_assert_eq!(a.coeffs(), b.coeffs());
        }
    }

    #[test]
    fn l_min_is_monotone_in_the_region(h1 in 0.05f64..0.3, dh in 0.0f64..0.15, center in 0.0f64..1.0) {
        let small = ControlRegion::crossed_strips(center, h1).unwrap();
        let large = ControlRegion::crossed_strips(center, h1 + dh).unwrap();
        let (rs, rl) = (check_gcc(&small, &small_gcc(), 1.0).unwrap(), check_gcc(&large, &small_gcc(), 1.0).unwrap());
        prop_assert!(rl.l_min <= rs.l_min);
        let ball = |r: f64| ControlRegion::new(2, vec![Shape::Ball { center: [center, 0.5], radius: r }]).unwrap();
        let (bs, bl) = (check_gcc(&ball(0.3 + h1), &small_gcc(), 1.0).unwrap(), check_gcc(&ball(0.3 + h1 + dh), &small_gcc(), 1.0).unwrap());
        prop_assert!(bl.l_min <= bs.l_min);
    }

    #[test]
    fn witnesses_survive_refinement(axis in 0usize..2, center in 0.0f64..1.0, hw in 0.02f64..0.4) {
        let r = check_gcc(&ControlRegion::new(2, vec![Shape::Strip { axis, center, half_width: hw }]).unwrap(), &small_gcc(), 1.0).unwrap();
        prop_assert!(!r.satisfied);
        prop_assert!(r.witness.is_some() && r.witness_verified);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn frozen_evolution_is_linear(seed in 0u64..1_000_000, a in -2.0f64..2.0) {
        let g = TorusGrid::new(2, 8).unwrap();
        let tg = TimeGrid::new(0.0, 0.5, 10).unwrap();
        let p = Projection::Nyquist;
        let back = background(g, &tg, seed, 0.1);
        let gen = ParaGenerator::new(&back, &Nonlinearity::cubic(), &CutoffProfile::default(), p, 1.0);
        let (x, y) = (seeded_field(g, seed + 1).project(p), seeded_field(g, seed + 2).project(p));
        let g1: Vec<Field> = (0..10).map(|n| seeded_field(g, seed + 10 + n).project(p)).collect();
        let g2: Vec<Field> = (0..10).map(|n| seeded_field(g, seed + 30 + n).project(p)).collect();
        let mix: Vec<Field> = (0..10).map(|n| g1[n].scale_real(a).add(&g2[n])).collect();
        let so = StepOptions::default();
        let run = |init: &Field, src: &[Field]| {
            let s = |n: usize| src[n].clone();
            evolve_linear(&gen, init, &tg, Some(&s), Direction::Forward, &so).unwrap()
        };
        let lhs = run(&x.scale_real(a).add(&y), &mix);
        let (rx, ry) = (run(&x, &g1), run(&y, &g2));
        let rhs = rx.last().scale_real(a).add(ry.last());
        prop_assert!(lhs.last().sub(&rhs).l2_norm() <= 1e-10 * rhs.l2_norm());
    }

    #[test]
    fn skew_part_is_unitary(seed in 0u64..1_000_000, amp in 0.0f64..0.2) {
        let g = TorusGrid::new(2, 16).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let p = Projection::Nyquist;
        let back = background(g, &tg, seed, amp);
        let gen = ParaGenerator::new(&back, &Nonlinearity::cubic(), &CutoffProfile::default(), p, 0.0);
        let so = StepOptions::default();
        let w0 = seeded_field(g, seed + 1).project(p);
        let tr = evolve_linear(&gen, &w0, &tg, None, Direction::Forward, &so).unwrap();
        for pair in tr.states.windows(2) {
            let (a, b) = (pair[0].l2_norm(), pair[1].l2_norm());
            prop_assert!((a - b).abs() <= 10.0 * so.krylov.tol * a);
        }
    }

    #[test]
    fn hum_invert_then_apply_is_identity(seed in 0u64..1_000_000) {
        let g = TorusGrid::new(2, 16).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let c = qls_core::geometry::build_cutoffs(&ControlRegion::crossed_strips(0.5, 0.25).unwrap(), 0.06, 1.0, &g).unwrap();
        let s = ControlSetup::new(tg, c.chi, c.phi, Projection::Nyquist).unwrap();
        let ops = HumOperators::free(&s);
        let u = s.filter(&seeded_field(g, seed));
        let (v0, _) = ops.hum_invert(&u, None).unwrap();
        let back = s.filter(&ops.hum_apply(&v0).unwrap());
        prop_assert!(back.sub(&u).l2_norm() <= 10.0 * s.cg.tol * u.l2_norm());
        // symmetry and positivity on the same probes
        let w = s.filter(&seeded_field(g, seed + 1));
        let (kuw, kwu) = (pair_dot(&ops.hum_apply(&u).unwrap(), &w), pair_dot(&u, &ops.hum_apply(&w).unwrap()));
        prop_assert!((kuw - kwu).abs() <= 1e-8 * kuw.abs().max(kwu.abs()));
        prop_assert!(ops.observed_energy(&u).unwrap() > 0.0);
    }
}
