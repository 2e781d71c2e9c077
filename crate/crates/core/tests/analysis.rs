mod common;

use std::f64::consts::PI;

use cochlea::analysis::*;
use cochlea::geometry::{build_graded_array, Point};
use cochlea::hopf::{solve_passive, solve_pure_tone};
use cochlea::modal::ModalSystem;
use common::*;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn zero_coupling_sweep_is_passive() {
    let sys = default_system();
    let grid = linspace(0.002, 0.08, 200);
    let sweep = pure_tone_sweep(sys, &grid, 1e-3, 0.0).unwrap();
    assert_eq!(sweep.metadata.flagged_points, 0);
    for (omega, p) in grid.iter().zip(&sweep.points) {
        let x = &p.solution.as_ref().unwrap().x;
        let passive = solve_passive(sys, *omega, 1e-3).unwrap();
        for (a, b) in x.iter().zip(&passive) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300), "Ω = {omega}");
        }
    }
}

#[test]
fn warm_and_cold_starts_agree() {
    let sys = default_system();
    let grid = resonance_refined_grid(0.005, 0.07, 60, &sys.omegas, 9, 5.0);
    let warm = pure_tone_sweep_with(sys, &grid, 1e-2, 1.0, &SweepOptions { warm_start: true, branch_check: false }).unwrap();
    let cold = pure_tone_sweep_with(sys, &grid, 1e-2, 1.0, &SweepOptions { warm_start: false, branch_check: false }).unwrap();
    for (a, b) in warm.points.iter().zip(&cold.points) {
        let (a, b) = (a.solution.as_ref().unwrap(), b.solution.as_ref().unwrap());
        let scale = b.x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (p, q) in a.x.iter().zip(&b.x) {
            assert!((p - q).norm() <= 1e-9 * scale, "Ω = {}", a.omega);
        }
    }
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let sys = default_system();
    let grid = linspace(0.01, 0.065, 70);
    let one = in_pool(1, || pure_tone_sweep(sys, &grid, 1e-2, 1.0).unwrap());
    let four = in_pool(4, || pure_tone_sweep(sys, &grid, 1e-2, 1.0).unwrap());
    assert_eq!(one, four);
}

#[test]
fn passive_peaks_sit_at_resonances() {
    let sys = default_system();
    let grid = resonance_refined_grid(0.002, 0.08, 400, &sys.omegas, 41, 20.0);
    let sweep = pure_tone_sweep(sys, &grid, 1e-6, 0.0).unwrap();
    for (m, w) in sys.omegas.iter().enumerate().skip(1) {
        let (k, _) = sweep
            .points
            .iter()
            .enumerate()
            .filter(|(k, _)| (grid[*k] - w.re).abs() < 10.0 * w.im.abs())
            .map(|(k, p)| (k, p.solution.as_ref().unwrap().x[m].norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((grid[k] - w.re).abs() <= w.im.abs(), "mode {m}: {} vs {}", grid[k], w.re);
    }
}

/// From far below to far above a single resonance the phase turns by
/// `π − 2|arg ω|`: half a cycle, less the radiation-damping offset.
#[test]
fn single_resonator_phase_turn() {
    for delta in [1e-3, 1e-4] {
        let array = build_graded_array(1, 1.0, 1.05, 0.5, -5.0).unwrap();
        let (sys, _) = ModalSystem::cached(&inputs(array, delta), Some(&cache_dir())).unwrap();
        let w = sys.omegas[0];
        let grid: Vec<f64> = (0..=400).map(|k| w.re * 10f64.powf(-3.0 + 5.0 * k as f64 / 400.0)).collect();
        let c = sys.array.resonators[0].center;
        let resp = phase_response(&sys, &grid, 1e-8, 0.0, &[Point::new(c.x, 0.0)]).unwrap();
        let phi = &resp.curves[0].phi;
        let turn = (phi[phi.len() - 1] - phi[0]).abs();
        let expect = PI - 2.0 * w.arg().abs();
        assert!((turn - expect).abs() < 0.01 * PI, "δ = {delta}: phase change {turn} vs {expect}");
    }
}

#[test]
fn group_delay_of_linear_phase() {
    let grid = linspace(0.01, 0.05, 41);
    let slope = -250.0;
    let phi: Vec<f64> = grid.iter().map(|w| 0.3 + slope * w).collect();
    let curve = PhaseCurve {
        x: Point::new(0.0, 0.0),
        grid: grid.clone(),
        r: vec![1.0; grid.len()],
        phi,
        phase_delay_cycles: vec![0.0; grid.len()],
        group_delay_cycles: vec![0.0; grid.len()],
    };
    for (g, w) in group_delay(&curve).iter().zip(&grid) {
        assert!((g - slope * w / (2.0 * PI)).abs() <= 1e-10 * g.abs());
    }
}

#[test]
fn phase_is_stable_under_grid_refinement() {
    let sys = default_system();
    let x = [sys.array.resonators[1].center, sys.array.resonators[4].center];
    let coarse = linspace(0.004, 0.07, 101);
    let fine = linspace(0.004, 0.07, 201);
    let a = phase_response(sys, &coarse, 1e-6, 1.0, &x).unwrap();
    let b = phase_response(sys, &fine, 1e-6, 1.0, &x).unwrap();
    assert_eq!(a.sign_flipped, b.sign_flipped);
    for (ca, cb) in a.curves.iter().zip(&b.curves) {
        for (k, w) in coarse.iter().enumerate() {
            let j = cb.grid.iter().position(|v| (v - w).abs() <= 1e-15 * w).unwrap();
            let i = ca.grid.iter().position(|v| (v - w).abs() <= 1e-15 * w).unwrap();
            assert!((ca.phi[i] - cb.phi[j]).abs() < 1e-9, "Ω = {w} (coarse index {k})");
        }
    }
}

#[test]
fn distant_second_tone_leaves_first_tone_alone() {
    let sys = default_system();
    let omega1 = sys.omegas[3].norm();
    let grid2 = linspace(0.009, 0.011, 5);
    let tt = two_tone_sweep(sys, omega1, &grid2, 1e-5, 1e-5, 1.0, 3).unwrap();
    let single = solve_pure_tone(sys, omega1, 1e-5, 1.0, None).unwrap().x[3].norm();
    for p in &tt.points {
        let s = p.solution.as_ref().unwrap();
        assert!(rel(s.abs_x10, single) < 0.01, "Ω₂ = {}", s.solution.omega2);
    }
}
