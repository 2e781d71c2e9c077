mod common;

use std::f64::consts::PI;

use cochlea::boundary::*;
use cochlea::geometry::{build_graded_array, Point};
use cochlea::spectral::{extract_eigenmode, find_resonances, SearchSpec};
use common::*;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn sigma_min(a: &nalgebra::DMatrix<Complex64>) -> f64 {
    a.singular_values().min()
}

/// Five-point Laplacian plus `k²u`, relative to `|u|`.
fn helmholtz_residual(f: impl Fn(Point) -> Complex64, k: Complex64, x: Point, h: f64) -> f64 {
    let u = f(x);
    let lap = (f(Point::new(x.x + h, x.y)) + f(Point::new(x.x - h, x.y)) + f(Point::new(x.x, x.y + h))
        + f(Point::new(x.x, x.y - h))
        - u * 4.0)
        / (h * h);
    (lap + k * k * u).norm() / u.norm()
}

#[test]
fn kernel_is_radially_symmetric() {
    let k = c(0.7, 0.05);
    for r in [0.1, 1.0, 3.7] {
        let a = fundamental_solution(k, Point::new(r, 0.0)).unwrap();
        let b = fundamental_solution(k, Point::new(0.0, r)).unwrap();
        let d = fundamental_solution(k, Point::new(-r / 2f64.sqrt(), r / 2f64.sqrt())).unwrap();
        assert!((a - b).norm() <= 1e-15 * a.norm());
        assert!((a - d).norm() <= 1e-14 * a.norm());
    }
    assert!(fundamental_solution(k, Point::new(0.0, 0.0)).is_err());
}

#[test]
fn kernel_solves_helmholtz_away_from_origin() {
    let k = c(0.5, 0.0);
    for theta in [0.0, 0.4, 2.0] {
        let x = Point::new(2.0 * f64::cos(theta), 2.0 * f64::sin(theta));
        let res = helmholtz_residual(|p| fundamental_solution(k, p).unwrap(), k, x, 1e-3);
        assert!(res <= 1e-6, "residual {res:e}");
    }
}

#[test]
fn kernel_decays_like_outgoing_cylinder_wave() {
    let k = c(1.0, 0.0);
    let g = fundamental_solution(k, Point::new(50.0, 0.0)).unwrap();
    let envelope = 0.25 * (2.0 / (PI * 50.0)).sqrt();
    assert!(rel(g.norm(), envelope) < 0.01);
}

#[test]
fn single_circle_does_not_mix_orders() {
    let array = build_graded_array(1, 1.0, 1.0, 0.5, -5.0).unwrap();
    for m_max in [1, 3, 6] {
        let sys = assemble_boundary_system(&array, &params(1e-3), c(0.02, -0.001), m_max).unwrap();
        let mm = m_max as i32;
        for br in [Block::Phi, Block::Psi] {
            for bc in [Block::Phi, Block::Psi] {
                for m in -mm..=mm {
                    for l in -mm..=mm {
                        if m != l {
                            assert_eq!(sys.matrix[(sys.index(br, 0, m), sys.index(bc, 0, l))], c(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn mirror_pair_matrix_commutes_with_mirror_operator() {
    let array = pair(Point::new(0.0, -4.0));
    let p = mirror_operator(&array, M).unwrap();
    for omega in [c(0.02, -0.001), c(0.3, 0.1)] {
        let a = assemble_boundary_system(&array, &params(1e-3), omega, M).unwrap().matrix;
        let defect = (&p * &a - &a * &p).norm() / a.norm();
        assert!(defect < 1e-13, "defect {defect:e}");
    }
    assert!(mirror_operator(&default_array(), M).is_none());
}

#[test]
fn assembly_is_bit_reproducible() {
    let array = default_array();
    let a = assemble_boundary_system(&array, &params(1e-3), c(0.03, -0.0002), M).unwrap();
    let b = assemble_boundary_system(&array, &params(1e-3), c(0.03, -0.0002), M).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), 2 * 6 * (2 * M + 1));
}

/// At the default gap the truncation error of `σ_min` shrinks by roughly 16x
/// per two orders; it drops below 1e-4 relative from M = 9 on.
#[test]
fn smallest_singular_value_converges_geometrically_in_truncation_order() {
    let array = default_array();
    for omega in [c(0.015, -0.0005), c(0.04, -0.0001), c(0.06, 0.0)] {
        let s: Vec<f64> = [3, 5, 7, 9, 11]
            .iter()
            .map(|&m| sigma_min(&assemble_boundary_system(&array, &params(1e-3), omega, m).unwrap().matrix))
            .collect();
        let steps: Vec<f64> = s.windows(2).map(|w| (w[0] - w[1]).abs() / w[1]).collect();
        for w in steps.windows(2) {
            assert!(w[1] < w[0] / 8.0, "not geometric: {steps:?}");
        }
        assert!(steps[3] < 1e-4, "M = 9 -> 11 change {:e}", steps[3]);
    }
}

#[test]
fn zero_density_gives_zero_field() {
    let array = default_array();
    let d = MultipoleDensity::zeros(6, M);
    for x in [Point::new(-3.0, 1.0), Point::new(1.0, 0.2), Point::new(30.0, -8.0)] {
        assert_eq!(evaluate_field(&array, &params(1e-3), c(0.03, 0.0), &d, &x).unwrap(), c(0.0, 0.0));
    }
}

#[test]
fn far_field_is_monopole_dominated() {
    let array = default_array();
    let p = params(1e-3);
    let omega = c(0.02, 0.0);
    let mut d = MultipoleDensity::zeros(6, M);
    d.psi[0][M] = c(1.0, 0.3);
    d.psi[0][M + 1] = c(0.5, 0.0);
    d.psi[0][M - 2] = c(0.0, -0.4);
    let r1 = array.resonators[0].radius;
    let c1 = array.resonators[0].center;
    let moment = d.psi[0][M] * (2.0 * PI * r1);
    for theta in [0.3, 1.9, 4.0] {
        let x = Point::new(c1.x + 100.0 * r1 * f64::cos(theta), 100.0 * r1 * f64::sin(theta));
        let u = evaluate_field(&array, &p, omega, &d, &x).unwrap();
        let g = fundamental_solution(p.k(omega), Point::new(x.x - c1.x, x.y - c1.y)).unwrap();
        assert!((u - moment * g).norm() < 0.01 * (moment * g).norm());
    }
}

#[test]
fn boundary_points_need_a_side() {
    let array = default_array();
    let d = MultipoleDensity::zeros(6, M);
    let ev = FieldEvaluator::new(&array, &params(1e-3), c(0.02, 0.0), &d).unwrap();
    let x = array.resonators[2].boundary_point(0.7);
    assert!(matches!(ev.value(&x), Err(cochlea::Error::OnBoundary { index: 2, .. })));
}

#[test]
fn eigenmode_traces_are_continuous() {
    let array = build_graded_array(2, 1.0, 1.05, 0.5, -5.0).unwrap();
    let p = params(1e-3);
    let res = find_resonances(&array, &p, M, &SearchSpec::default()).unwrap();
    for r in &res {
        let mode = extract_eigenmode(&array, &p, r).unwrap();
        let ev = FieldEvaluator::new(&array, &p, r.omega, &mode.density).unwrap();
        let samples: Vec<_> = (0..array.len())
            .flat_map(|j| (0..64).map(move |s| (j, 2.0 * PI * s as f64 / 64.0)))
            .map(|(j, t)| (ev.trace(j, t, Side::Inside), ev.trace(j, t, Side::Outside)))
            .collect();
        let scale = samples.iter().map(|(a, _)| a.0.norm()).fold(0.0, f64::max);
        let jump = samples.iter().map(|(a, b)| (a.0 - b.0).norm()).fold(0.0, f64::max);
        assert!(jump <= 1e-8 * scale, "jump {jump:e} vs scale {scale:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fields_solve_helmholtz_in_each_region(
        seed in proptest::collection::vec(-1.0f64..1.0, 2 * 2 * 2 * (2 * M + 1)),
        t in 0.0f64..(2.0 * PI),
        rho in 0.2f64..0.8,
        far in 1.3f64..3.0,
    ) {
        let array = build_graded_array(2, 1.0, 1.05, 0.5, -5.0).unwrap();
        let p = WaveParams::new(1.0, 0.7, 1e-3).unwrap();
        let omega = c(0.3, -0.01);
        let v = DVector::from_iterator(seed.len() / 2, seed.chunks(2).map(|z| c(z[0], z[1])));
        let d = MultipoleDensity::from_vector(2, M, &v).unwrap();
        let ev = FieldEvaluator::new(&array, &p, omega, &d).unwrap();
        let r = array.resonators[1];
        let inside = Point::new(r.center.x + rho * r.radius * t.cos(), rho * r.radius * t.sin());
        let outside = Point::new(r.center.x + far * r.radius * t.cos(), far * r.radius * t.sin());
        prop_assume!(array.locate(&outside).is_none());
        let f = |x: Point| ev.value(&x).unwrap();
        prop_assert!(helmholtz_residual(f, p.k_b(omega), inside, 1e-3) < 1e-4);
        prop_assert!(helmholtz_residual(f, p.k(omega), outside, 1e-3) < 1e-4);
    }
}
