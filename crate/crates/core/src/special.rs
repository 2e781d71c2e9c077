//! Integer-order cylinder functions `J_n` and `H_n^(1)` for complex arguments.
//!
//! Regions (by `|z|` and `Im z`):
//!
//! * `J_n`: ascending power series for `|z| <= 1`, Miller backward recurrence
//!   normalised with the Jacobi–Anger sums otherwise.
//! * `H_n^(1)`: Hankel's asymptotic expansion for `|z| >= 20` (away from the
//!   lower side of the branch cut), Steed/Temme continued fraction for `K_0`,
//!   `K_1` when `Im z > 2`, and `J_n + i Y_n` with Neumann series for `Y_0`, `Y_1`
//!   elsewhere. Higher orders follow by upward recurrence, which is stable for
//!   the dominant solution.
//!
//! Negative orders use `C_{-n} = (-1)^n C_n`. The principal branch (cut along
//! the negative real axis) is used throughout.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported `|z|`.
pub const MAX_ABS_ARG: f64 = 1.0e4;
/// Largest supported `|Im z|`; beyond this `J_n` overflows.
pub const MAX_ABS_IMAG: f64 = 600.0;
/// Largest supported `|order|`.
pub const MAX_ORDER: usize = 1000;

const SERIES_RADIUS: f64 = 1.0;
const ASYMPTOTIC_RADIUS: f64 = 20.0;
const CF2_MIN_IMAG: f64 = 2.0;
/// Neumann series are only trusted up to this modulus in the sector near the
/// lower side of the cut where the Hankel expansion is not used.
const NEUMANN_MAX_RADIUS: f64 = 60.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = f64::EPSILON;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A cylinder-function value together with a rough a-posteriori bound on its
/// absolute error, derived from the magnitude of cancelling terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderFunctionResult {
    pub value: Complex64,
    pub estimated_abs_error: f64,
}

fn check_arg(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::OutOfRange(format!("non-finite argument {z}")));
    }
    if z.norm() > MAX_ABS_ARG {
        return Err(Error::OutOfRange(format!("|z| = {} exceeds {MAX_ABS_ARG}", z.norm())));
    }
    if z.im.abs() > MAX_ABS_IMAG {
        return Err(Error::OutOfRange(format!("|Im z| = {} exceeds {MAX_ABS_IMAG}", z.im.abs())));
    }
    Ok(())
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::OutOfRange(format!("order {n} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

fn reflect(order: i32, v: Complex64) -> Complex64 {
    if order < 0 && order % 2 != 0 {
        -v
    } else {
        v
    }
}

/// `J_order(z)`.
pub fn bessel_j(order: i32, z: Complex64) -> Result<Complex64> {
    Ok(bessel_j_checked(order, z)?.value)
}

/// `H_order^(1)(z)`; errors at `z = 0`.
pub fn hankel1(order: i32, z: Complex64) -> Result<Complex64> {
    Ok(hankel1_checked(order, z)?.value)
}

/// `Y_order(z)`; errors at `z = 0`.
pub fn bessel_y(order: i32, z: Complex64) -> Result<Complex64> {
    let n = order.unsigned_abs() as usize;
    let j = bessel_j_seq(n, z)?;
    let h = hankel1_seq(n, z)?;
    Ok(reflect(order, (h[n] - j[n]) * -I))
}

pub fn bessel_j_checked(order: i32, z: Complex64) -> Result<CylinderFunctionResult> {
    let n = order.unsigned_abs() as usize;
    let (values, rel) = j_values(n, z)?;
    let value = reflect(order, values[n]);
    Ok(CylinderFunctionResult { value, estimated_abs_error: rel * value.norm().max(EPS) })
}

pub fn hankel1_checked(order: i32, z: Complex64) -> Result<CylinderFunctionResult> {
    let n = order.unsigned_abs() as usize;
    let (values, rel) = h_values(n, z)?;
    let value = reflect(order, values[n]);
    Ok(CylinderFunctionResult { value, estimated_abs_error: rel * value.norm() })
}

/// `[J_0(z), …, J_nmax(z)]`.
pub fn bessel_j_seq(nmax: usize, z: Complex64) -> Result<Vec<Complex64>> {
    Ok(j_values(nmax, z)?.0)
}

/// `[H_0^(1)(z), …, H_nmax^(1)(z)]`.
pub fn hankel1_seq(nmax: usize, z: Complex64) -> Result<Vec<Complex64>> {
    Ok(h_values(nmax, z)?.0)
}

/// Derivative of a cylinder function from its neighbours: `C_n' = (C_{n-1} - C_{n+1}) / 2`,
/// given a sequence `C_0..=C_{nmax+1}`. Returns `C_0'..=C_nmax'`.
pub fn derivatives(seq: &[Complex64]) -> Vec<Complex64> {
    let nmax = seq.len().saturating_sub(2);
    (0..=nmax)
        .map(|n| {
            let prev = if n == 0 { -seq[1] } else { seq[n - 1] };
            (prev - seq[n + 1]) * 0.5
        })
        .collect()
}

/// Values `J_0..=J_nmax` with a relative error estimate.
fn j_values(nmax: usize, z: Complex64) -> Result<(Vec<Complex64>, f64)> {
    check_arg(z)?;
    check_order(nmax)?;
    if z == ZERO {
        let mut v = vec![ZERO; nmax + 1];
        v[0] = ONE;
        return Ok((v, 0.0));
    }
    let (mut table, rel) = j_table(z, nmax + 1)?;
    table.truncate(nmax + 1);
    Ok((table, rel))
}

/// `J_n(z)` for `n = 0..len'` with `len' >= min_len`, long enough that the
/// Neumann sums over the table converge. Returns a relative error estimate.
fn j_table(z: Complex64, min_len: usize) -> Result<(Vec<Complex64>, f64)> {
    if z.norm() <= SERIES_RADIUS {
        // Orders beyond the first n with (|z|/2)^n / n! < 1e-18 do not matter.
        let mut needed = 1;
        let mut t = 1.0;
        while t >= 1e-18 {
            t *= 0.5 * z.norm() / needed as f64;
            needed += 1;
        }
        let len = min_len.max(needed + 2);
        let mut out = Vec::with_capacity(len);
        let mut worst = 0.0f64;
        for n in 0..len {
            let (v, rel) = j_series(n, z);
            worst = worst.max(rel);
            out.push(v);
        }
        Ok((out, worst))
    } else {
        j_miller(z, min_len)
    }
}

/// Ascending series `J_n(z) = (z/2)^n Σ (-z²/4)^k / (k! (n+k)!)`.
fn j_series(n: usize, z: Complex64) -> (Complex64, f64) {
    let half = z * 0.5;
    let mut prefactor = ONE;
    for k in 1..=n {
        prefactor *= half / k as f64;
    }
    let q = -half * half;
    let mut term = ONE;
    let mut sum = ONE;
    let mut abs_sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * (n + k) as f64);
        sum += term;
        abs_sum += term.norm();
        if term.norm() < EPS * 0.25 * sum.norm() {
            break;
        }
    }
    let rel = 2.0 * EPS * abs_sum / sum.norm().max(f64::MIN_POSITIVE);
    (prefactor * sum, rel)
}

/// Miller backward recurrence normalised by `e^{±iz} = J_0 + 2 Σ (±i)^k J_k`.
fn j_miller(z: Complex64, min_len: usize) -> Result<(Vec<Complex64>, f64)> {
    let az = z.norm();
    let start = (min_len as f64).max(az) + 20.0 + 12.0 * az.cbrt();
    let start = start.ceil() as usize;
    let mut f = vec![ZERO; start + 2];
    f[start] = Complex64::new(1e-30, 0.0);
    let inv_z = z.inv();
    for n in (1..=start).rev() {
        f[n - 1] = f[n] * (2.0 * n as f64) * inv_z - f[n + 1];
        if f[n - 1].norm() > 1e250 {
            for v in f[n - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    // Use the sum whose exponential is not small so the normalisation is well conditioned.
    let (unit, expo) = if z.im >= 0.0 { (-I, (-I * z).exp()) } else { (I, (I * z).exp()) };
    let mut sum = f[0];
    let mut abs_sum = f[0].norm();
    let mut power = ONE;
    for fk in f.iter().take(start + 1).skip(1) {
        power *= unit;
        let t = *fk * power * 2.0;
        sum += t;
        abs_sum += t.norm();
    }
    let scale = expo / sum;
    let mut out: Vec<Complex64> = f.into_iter().take(start + 1).map(|v| v * scale).collect();
    out.truncate(start + 1);
    let rel = 4.0 * EPS * (abs_sum / sum.norm() + (start as f64).sqrt());
    Ok((out, rel))
}

/// `Y_0`, `Y_1` from Neumann series over a `J` table.
fn y01_neumann(z: Complex64, table: &[Complex64]) -> (Complex64, Complex64, f64) {
    let log_term = (z * 0.5).ln() + EULER_GAMMA;
    let two_over_pi = 2.0 / PI;
    let mut s0 = ZERO;
    let mut s1 = ZERO;
    let mut abs0 = 0.0;
    let mut abs1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 < table.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let t0 = table[2 * k] * (sign / k as f64);
        let t1 = (table[2 * k - 1] - table[2 * k + 1]) * (sign / k as f64);
        s0 += t0;
        s1 += t1;
        abs0 += t0.norm();
        abs1 += t1.norm();
        k += 1;
    }
    let y0 = (log_term * table[0] - s0 * 2.0) * two_over_pi;
    let a = -table[0] / z;
    let y1 = (a + log_term * table[1] + s1) * two_over_pi;
    let scale = (log_term.norm() * table[0].norm() + 2.0 * abs0)
        .max(a.norm() + log_term.norm() * table[1].norm() + abs1);
    (y0, y1, scale)
}

/// `K_0(w)`, `K_1(w)` for `Re w > 0` away from the origin (Steed's CF2 with Temme's sum).
fn k01_cf2(w: Complex64) -> (Complex64, Complex64) {
    let mut b = (ONE + w) * 2.0;
    let mut d = b.inv();
    let mut h = d;
    let mut delh = d;
    let mut q1 = ZERO;
    let mut q2 = ONE;
    let a1 = 0.25;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = Complex64::new(a1, 0.0);
    let mut a = -a1;
    let mut s = ONE + q * delh;
    for i in 2..100_000 {
        a -= 2.0 * (i - 1) as f64;
        c *= (-a / i as f64);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = (b + d * a).inv();
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if dels.norm() < EPS * 0.5 * s.norm() {
            break;
        }
    }
    h *= a1;
    let k0 = (Complex64::new(PI, 0.0) / (w * 2.0)).sqrt() * (-w).exp() / s;
    let k1 = k0 * (w + 0.5 - h) / w;
    (k0, k1)
}

/// Hankel's expansion of `H_nu^(1)(z)` for large `|z|`.
fn hankel_asymptotic(nu: u32, z: Complex64) -> (Complex64, f64) {
    let mu = 4.0 * (nu as f64) * (nu as f64);
    let phase = z - (nu as f64) * FRAC_PI_2 - FRAC_PI_4;
    let pref = (Complex64::new(2.0 / PI, 0.0) / z).sqrt() * (I * phase).exp();
    let inv8z = (z * 8.0).inv();
    let mut term = ONE;
    let mut sum = ONE;
    let mut last = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * I * ((mu - odd * odd) / k as f64) * inv8z;
        if next.norm() > last {
            break;
        }
        term = next;
        last = term.norm();
        sum += term;
        if last < EPS * 0.25 {
            break;
        }
    }
    (pref * sum, 4.0 * EPS + last)
}

fn h_values(nmax: usize, z: Complex64) -> Result<(Vec<Complex64>, f64)> {
    check_arg(z)?;
    check_order(nmax)?;
    if z == ZERO {
        return Err(Error::Singular { function: "hankel1" });
    }
    let az = z.norm();
    let arg = z.im.atan2(z.re);
    let (h0, h1, rel) = if az >= ASYMPTOTIC_RADIUS && arg > -0.75 * PI {
        let (h0, e0) = hankel_asymptotic(0, z);
        let (h1, e1) = hankel_asymptotic(1, z);
        (h0, h1, e0.max(e1))
    } else if z.im > CF2_MIN_IMAG {
        let (k0, k1) = k01_cf2(-I * z);
        (k0 * Complex64::new(0.0, -2.0 / PI), k1 * (-2.0 / PI), 32.0 * EPS)
    } else {
        if az > NEUMANN_MAX_RADIUS {
            return Err(Error::OutOfRange(format!(
                "hankel1 near the lower side of the branch cut requires |z| <= {NEUMANN_MAX_RADIUS}"
            )));
        }
        let (table, jrel) = j_table(z, 2)?;
        let (y0, y1, scale) = y01_neumann(z, &table);
        let h0 = table[0] + I * y0;
        let h1 = table[1] + I * y1;
        let mag = h0.norm().min(h1.norm()).max(f64::MIN_POSITIVE);
        (h0, h1, jrel + 8.0 * EPS * scale / mag)
    };
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(h0);
    if nmax >= 1 {
        out.push(h1);
    }
    let inv_z = z.inv();
    for n in 1..nmax {
        let next = out[n] * (2.0 * n as f64) * inv_z - out[n - 1];
        out.push(next);
    }
    let growth = 1.0 + nmax as f64 * EPS / rel.max(EPS);
    Ok((out, rel * growth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_j(0, ZERO).unwrap(), ONE);
        assert_eq!(bessel_j(1, ZERO).unwrap(), ZERO);
        assert!(matches!(hankel1(0, ZERO), Err(Error::Singular { .. })));
        assert!(bessel_j(0, c(2.0e4, 0.0)).is_err());
    }

    #[test]
    fn j1_at_one() {
        let v = bessel_j(1, c(1.0, 0.0)).unwrap();
        assert!(rel(v, c(0.440_050_585_744_933_5, 0.0)) < 1e-14);
    }

    #[test]
    fn h0_at_one() {
        let v = hankel1(0, c(1.0, 0.0)).unwrap();
        assert!(rel(v, c(0.765_197_686_557_966_6, 0.088_256_964_215_676_96)) < 1e-13);
    }

    #[test]
    fn odd_reflection() {
        for z in [c(0.3, 0.1), c(3.0, -0.5), c(25.0, 2.0), c(4.0, 7.0)] {
            for n in 1..8 {
                let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(hankel1(-n, z).unwrap(), hankel1(n, z).unwrap() * s);
                assert_eq!(bessel_j(-n, z).unwrap(), bessel_j(n, z).unwrap() * s);
            }
        }
    }

    #[test]
    fn derivative_helper_matches_identity() {
        let z = c(1.7, 0.2);
        let j = bessel_j_seq(4, z).unwrap();
        let d = derivatives(&j);
        assert_eq!(d.len(), 4);
        assert!(rel(d[0], -j[1]) < 1e-15);
        let h = 1e-6;
        let fd = (bessel_j(2, z + h).unwrap() - bessel_j(2, z - h).unwrap()) / (2.0 * h);
        assert!(rel(d[2], fd) < 1e-8);
    }

    #[test]
    fn error_estimates_are_finite_and_small() {
        for z in [c(0.5, 0.0), c(5.0, 0.0), c(45.0, 0.0), c(3.0, 9.0)] {
            let r = hankel1_checked(3, z).unwrap();
            assert!(r.estimated_abs_error.is_finite());
            assert!(r.estimated_abs_error < 1e-10 * r.value.norm());
        }
    }
}
