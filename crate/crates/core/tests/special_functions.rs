use cochlea::special::{bessel_j, bessel_j_seq, hankel1, hankel1_seq};
use num_complex::Complex64;

const DATA: &str = include_str!("data_special.txt");

struct Row {
    z: Complex64,
    n: i32,
    j: Complex64,
    h: Complex64,
}

fn rows() -> Vec<Row> {
    DATA.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            Row {
                z: Complex64::new(f[0], f[1]),
                n: f[2] as i32,
                j: Complex64::new(f[3], f[4]),
                h: Complex64::new(f[5], f[6]),
            }
        })
        .collect()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn bessel_j_matches_reference_values() {
    let mut worst = 0.0f64;
    for r in rows() {
        let e = rel(bessel_j(r.n, r.z).unwrap(), r.j);
        assert!(e < 1e-10, "J_{}({}) rel err {e:e}", r.n, r.z);
        worst = worst.max(e);
    }
    println!("worst J relative error {worst:e}");
}

#[test]
fn hankel1_matches_reference_values() {
    let mut worst = 0.0f64;
    for r in rows() {
        let e = rel(hankel1(r.n, r.z).unwrap(), r.h);
        assert!(e < 1e-10, "H_{}({}) rel err {e:e}", r.n, r.z);
        worst = worst.max(e);
    }
    println!("worst H relative error {worst:e}");
}

#[test]
fn sequences_agree_with_single_evaluations() {
    for r in rows().iter().filter(|r| r.n == 30) {
        let js = bessel_j_seq(30, r.z).unwrap();
        let hs = hankel1_seq(30, r.z).unwrap();
        assert!(rel(js[30], r.j) < 1e-10);
        assert!(rel(hs[30], r.h) < 1e-10);
    }
}

fn grid() -> Vec<Complex64> {
    let mut out = Vec::new();
    for &m in &[1e-6, 1e-3, 0.1, 0.7, 2.5, 8.0, 19.0, 21.0, 35.0, 50.0] {
        for &a in &[-0.4, 0.0, 0.3, 1.2] {
            let z = Complex64::from_polar(m, a);
            // For large |Im z| both products in the Wronskian grow like e^{|Im z|}
            // while their difference does not, so the identity loses that many digits.
            if z.im.abs() <= 5.0 {
                out.push(z);
            }
        }
    }
    out
}

#[test]
fn wronskian_identity() {
    for z in grid() {
        let j = bessel_j_seq(31, z).unwrap();
        let h = hankel1_seq(31, z).unwrap();
        // J_{n+1} Y_n - J_n Y_{n+1} = 2 / (pi z), hence the +2i / (pi z) below.
        let expected = Complex64::new(0.0, 2.0 / std::f64::consts::PI) / z;
        let orders = (0..=30usize).filter(|&n| n as f64 <= 2.0 * z.norm() + 10.0);
        for n in orders {
            let w = j[n + 1] * h[n] - j[n] * h[n + 1];
            let e = rel(w, expected);
            assert!(e < 1e-8, "Wronskian at n={n}, z={z}: {e:e}");
        }
    }
}

#[test]
fn three_term_recurrence() {
    for z in grid() {
        let j = bessel_j_seq(31, z).unwrap();
        let h = hankel1_seq(31, z).unwrap();
        for n in 1..=30usize {
            let f = Complex64::new(2.0 * n as f64, 0.0) / z;
            for (name, c) in [("J", &j), ("H", &h)] {
                let lhs = c[n - 1] + c[n + 1];
                let rhs = f * c[n];
                let scale = c[n - 1].norm().max(c[n + 1].norm());
                if scale == 0.0 || !scale.is_finite() {
                    continue;
                }
                let e = (lhs - rhs).norm() / scale;
                assert!(e < 1e-8, "{name} recurrence n={n}, z={z}: {e:e}");
            }
        }
    }
}

#[test]
fn hankel_modulus_decays_like_outgoing_wave() {
    let z = Complex64::new(50.0, 0.0);
    let m = hankel1(0, z).unwrap().norm();
    let expected = (2.0 / (std::f64::consts::PI * 50.0)).sqrt();
    assert!((m - expected).abs() / expected < 0.01);
}
