//! Harmonic-balance solvers for the projected Hopf-type systems.
//!
//! Pure tone: for each mode `m`
//!
//! ```text
//! (ω_m² − Ω²) X_m + F g_m − iΩ³β (Gᵀ W(X))_m = 0,
//! W_n(X) = Σ_{ijk} X_i X_j X̄_k T[n][i][j][k],   g = Gᵀ (δ_{x0}, u)_Q,   G = γ⁻¹.
//! ```
//!
//! Two tones produce four coupled blocks at `Ω₁`, `Ω₂`, `2Ω₁ − Ω₂` and
//! `−Ω₁ + 2Ω₂`, coupled through the cubic coefficients of
//! [`cubic_coefficients`]. Both systems depend on `X̄`, so Newton runs on the
//! real and imaginary parts with a Jacobian assembled from the Wirtinger
//! derivatives `∂R/∂X` and `∂R/∂X̄`. Unknowns are deviations from the passive
//! (β = 0) solution, which keeps tiny nonlinear corrections resolvable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::{ModalSystem, Samples};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Certificate tolerance: residual norm ≤ `CERT_TOL · (1 + forcing)`.
pub const CERT_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 60;
const MAX_HALVINGS: usize = 40;
/// Continuation in `F` halves the forcing at most this many times.
const MAX_CONTINUATION: usize = 40;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn add(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureToneSolution {
    pub omega: f64,
    pub f: f64,
    pub beta: f64,
    pub x: Vec<Complex64>,
    pub newton_iters: usize,
    pub residual_norm: f64,
    /// Forcing halvings needed before Newton converged (0 when not needed).
    pub continuation_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoToneSolution {
    pub omega1: f64,
    pub omega2: f64,
    pub f1: f64,
    pub f2: f64,
    pub beta: f64,
    pub x10: Vec<Complex64>,
    pub x01: Vec<Complex64>,
    pub x21: Vec<Complex64>,
    pub x12: Vec<Complex64>,
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub continuation_steps: usize,
}

impl TwoToneSolution {
    pub fn blocks(&self) -> [&Vec<Complex64>; 4] {
        [&self.x10, &self.x01, &self.x21, &self.x12]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfOracleResult {
    pub mu: f64,
    pub omega0: f64,
    pub omega: f64,
    pub f: f64,
    pub steady_amplitude: f64,
    /// Relative amplitude drift over the last 10% of the integration.
    pub drift: f64,
    pub t_final: f64,
}

/// Exact linear (β = 0) response `X_m = −F g_m / (ω_m² − Ω²)`.
pub fn solve_passive(system: &ModalSystem, omega: f64, f: f64) -> Result<Vec<Complex64>> {
    let g = system.forcing();
    system
        .omegas
        .iter()
        .zip(&g)
        .map(|(w, gm)| {
            let d = w * w - omega * omega;
            if d.norm() < 1e-14 * (w * w).norm() {
                return Err(Error::SingularSystem(format!("Ω = {omega} coincides with resonance {w}")));
            }
            Ok(-gm * f / d)
        })
        .collect()
}

/// `W_n = Σ_{ijk} a_i b_j c̄_k T[n][i][j][k]`.
pub fn contract(system: &ModalSystem, a: &[Complex64], b: &[Complex64], c: &[Complex64]) -> Vec<Complex64> {
    let n = system.n();
    let t = &system.cubic_tensor;
    let cc: Vec<Complex64> = c.iter().map(|z| z.conj()).collect();
    (0..n)
        .map(|nn| {
            let mut acc = ZERO;
            for i in 0..n {
                for j in 0..n {
                    let ab = a[i] * b[j];
                    let base = ((nn * n + i) * n + j) * n;
                    let mut inner = ZERO;
                    for k in 0..n {
                        inner += t[base + k] * cc[k];
                    }
                    acc += ab * inner;
                }
            }
            acc
        })
        .collect()
}

/// `M[n][p] = Σ_{jk} T[n][p][j][k] b_j c̄_k` (derivative in the first slot).
fn slot1(system: &ModalSystem, b: &[Complex64], c: &[Complex64]) -> DMatrix<Complex64> {
    let n = system.n();
    DMatrix::from_fn(n, n, |nn, p| {
        let mut acc = ZERO;
        for j in 0..n {
            for k in 0..n {
                acc += system.t(nn, p, j, k) * b[j] * c[k].conj();
            }
        }
        acc
    })
}

/// `M[n][p] = Σ_{ij} T[n][i][j][p] a_i b_j` (derivative in the conjugated slot).
fn slot3(system: &ModalSystem, a: &[Complex64], b: &[Complex64]) -> DMatrix<Complex64> {
    let n = system.n();
    DMatrix::from_fn(n, n, |nn, p| {
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += system.t(nn, i, j, p) * a[i] * b[j];
            }
        }
        acc
    })
}

fn gt_matrix(system: &ModalSystem) -> DMatrix<Complex64> {
    system.gram_inverse_matrix().transpose()
}

/// Independent residual of the pure-tone system at `x` (full, not deviation form).
pub fn pure_tone_residual(system: &ModalSystem, omega: f64, f: f64, beta: f64, x: &[Complex64]) -> Vec<Complex64> {
    let n = system.n();
    let src = system.source_vec.clone();
    let ginv = &system.gram_inverse;
    // W computed entry by entry straight from the definition.
    let mut w = vec![ZERO; n];
    for (nn, wn) in w.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    *wn += x[i] * x[j] * x[k].conj() * system.t(nn, i, j, k);
                }
            }
        }
    }
    let c = -I * omega.powi(3) * beta;
    (0..n)
        .map(|m| {
            let mut gsrc = ZERO;
            let mut gw = ZERO;
            for k in 0..n {
                gsrc += ginv[k][m] * src[k];
                gw += ginv[k][m] * w[k];
            }
            (system.omegas[m] * system.omegas[m] - omega * omega) * x[m] + gsrc * f + c * gw
        })
        .collect()
}

/// Real Newton system from complex Wirtinger blocks: `δR = J1 δY + J2 δȲ`.
fn realify(j1: &DMatrix<Complex64>, j2: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = j1.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let s = j1[(r, c)] + j2[(r, c)];
            let d = I * (j1[(r, c)] - j2[(r, c)]);
            out[(r, c)] = s.re;
            out[(r, n + c)] = d.re;
            out[(n + r, c)] = s.im;
            out[(n + r, n + c)] = d.im;
        }
    }
    out
}

fn solve_step(j1: &DMatrix<Complex64>, j2: &DMatrix<Complex64>, r: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = r.len();
    let jr = realify(j1, j2);
    let rhs = DVector::from_fn(2 * n, |i, _| if i < n { -r[i].re } else { -r[i - n].im });
    let d = jr.lu().solve(&rhs)?;
    if d.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((0..n).map(|i| Complex64::new(d[i], d[n + i])).collect())
}

struct NewtonOutcome {
    y: Vec<Complex64>,
    iters: usize,
}

/// Damped Newton on deviation variables, iterated until the residual stops decreasing.
fn newton<R, J>(residual: R, jacobian: J, y0: Vec<Complex64>, blowup: f64) -> Result<NewtonOutcome>
where
    R: Fn(&[Complex64]) -> Vec<Complex64>,
    J: Fn(&[Complex64]) -> (DMatrix<Complex64>, DMatrix<Complex64>),
{
    let mut y = y0;
    let mut r = residual(&y);
    let mut nr = norm(&r);
    let mut iters = 0;
    while iters < MAX_NEWTON && nr > 0.0 {
        iters += 1;
        let (j1, j2) = jacobian(&y);
        let Some(step) = solve_step(&j1, &j2, &r) else {
            return Err(Error::SingularSystem("Newton Jacobian is singular".into()));
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<Complex64> = y.iter().zip(&step).map(|(a, d)| a + d * lambda).collect();
            let rt = residual(&trial);
            let nt = norm(&rt);
            if nt.is_finite() && nt < (1.0 - 1e-4 * lambda) * nr {
                y = trial;
                r = rt;
                nr = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if norm(&y) > blowup {
            return Err(Error::Divergence { norm: norm(&y) });
        }
        if !accepted || norm(&step) * lambda <= 4.0 * f64::EPSILON * norm(&y) {
            break;
        }
    }
    Ok(NewtonOutcome { y, iters })
}

fn divergence_bound(reference: f64) -> f64 {
    1e8 * (1.0 + reference)
}

/// One Newton solve of the pure-tone system from `start`.
fn pure_tone_newton(
    system: &ModalSystem,
    omega: f64,
    f: f64,
    beta: f64,
    start: &[Complex64],
) -> Result<(Vec<Complex64>, usize, f64)> {
    let n = system.n();
    let xp = solve_passive(system, omega, f)?;
    let d: Vec<Complex64> = system.omegas.iter().map(|w| w * w - omega * omega).collect();
    let gt = gt_matrix(system);
    let c = -I * omega.powi(3) * beta;
    let residual = |y: &[Complex64]| -> Vec<Complex64> {
        let x = add(&xp, y);
        let w = contract(system, &x, &x, &x);
        let gw = system.apply_gt(&w);
        (0..n).map(|m| d[m] * y[m] + c * gw[m]).collect()
    };
    let jacobian = |y: &[Complex64]| {
        let x = add(&xp, y);
        let a = slot1(system, &x, &x) * Complex64::new(2.0, 0.0);
        let b = slot3(system, &x, &x);
        let j1 = DMatrix::from_diagonal(&DVector::from_vec(d.clone())) + &gt * a * c;
        let j2 = &gt * b * c;
        (j1, j2)
    };
    let y0: Vec<Complex64> = start.iter().zip(&xp).map(|(s, p)| s - p).collect();
    let out = newton(residual, jacobian, y0, divergence_bound(norm(&xp)))?;
    let x = add(&xp, &out.y);
    let cert = norm(&pure_tone_residual(system, omega, f, beta, &x));
    Ok((x, out.iters, cert))
}

/// Solves the pure-tone system on the branch connected to the passive response.
pub fn solve_pure_tone(
    system: &ModalSystem,
    omega: f64,
    f: f64,
    beta: f64,
    start: Option<&[Complex64]>,
) -> Result<PureToneSolution> {
    if !beta.is_finite() || !f.is_finite() || !omega.is_finite() {
        return Err(Error::InvalidParameter("Ω, F and β must be finite".into()));
    }
    let tol = CERT_TOL * (1.0 + f.abs());
    let passive = solve_passive(system, omega, f)?;
    let first_start = start.map(|s| s.to_vec()).unwrap_or_else(|| passive.clone());
    let mut last = f64::INFINITY;
    if let Ok((x, iters, cert)) = pure_tone_newton(system, omega, f, beta, &first_start) {
        if cert <= tol {
            return Ok(PureToneSolution {
                omega, f, beta, x, newton_iters: iters, residual_norm: cert, continuation_steps: 0,
            });
        }
        last = cert;
    }
    // Continuation: halve F until Newton converges from the passive start, then double back.
    let mut levels = 0;
    let mut fl = f;
    let mut current = None;
    while levels < MAX_CONTINUATION {
        levels += 1;
        fl *= 0.5;
        let p = solve_passive(system, omega, fl)?;
        if let Ok((x, _, cert)) = pure_tone_newton(system, omega, fl, beta, &p) {
            if cert <= CERT_TOL * (1.0 + fl.abs()) {
                current = Some(x);
                break;
            }
        }
    }
    let mut x = current.ok_or(Error::NoConvergence { iterations: levels, residual: last })?;
    let mut total_iters = 0;
    let mut cert = f64::INFINITY;
    for l in (0..levels).rev() {
        let fl = f / 2f64.powi(l as i32);
        let (xn, it, c) = pure_tone_newton(system, omega, fl, beta, &x)?;
        total_iters += it;
        if c > CERT_TOL * (1.0 + fl.abs()) {
            return Err(Error::NoConvergence { iterations: total_iters, residual: c });
        }
        x = xn;
        cert = c;
    }
    Ok(PureToneSolution {
        omega, f, beta, x, newton_iters: total_iters, residual_norm: cert, continuation_steps: levels,
    })
}

/// Newton from perturbed starts; returns the largest relative amplitude gap
/// to any other converged solution (`None` when none is found).
pub fn probe_other_branches(system: &ModalSystem, sol: &PureToneSolution) -> Option<f64> {
    let base = norm(&sol.x);
    let factors = [
        Complex64::new(0.2, 0.0),
        Complex64::new(3.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
    ];
    let tol = CERT_TOL * (1.0 + sol.f.abs());
    let mut worst: Option<f64> = None;
    for fac in factors {
        let start: Vec<Complex64> = sol.x.iter().map(|z| z * fac).collect();
        if let Ok((x, _, cert)) = pure_tone_newton(system, sol.omega, sol.f, sol.beta, &start) {
            if cert <= tol {
                let gap = (norm(&x) - base).abs() / base.max(f64::MIN_POSITIVE);
                if gap > 1e-3 {
                    worst = Some(worst.map_or(gap, |w: f64| w.max(gap)));
                }
            }
        }
    }
    worst
}

/// Monomial `coef · S_a S_b S̄_c` with indices into `[S10, S01, S21, S12]`.
type Monomial = (f64, usize, usize, usize);

const I10: usize = 0;
const I01: usize = 1;
const I21: usize = 2;
const I12: usize = 3;

/// The cubic terms of `|a|² a` that oscillate at each of the four frequencies.
const MONOMIALS: [&[Monomial]; 4] = [
    &[
        (1.0, I10, I10, I10),
        (2.0, I10, I01, I01),
        (2.0, I10, I21, I21),
        (2.0, I10, I12, I12),
        (1.0, I01, I01, I12),
        (2.0, I01, I21, I10),
        (2.0, I21, I12, I01),
    ],
    &[
        (1.0, I01, I01, I01),
        (2.0, I01, I10, I10),
        (2.0, I01, I21, I21),
        (2.0, I01, I12, I12),
        (1.0, I10, I10, I21),
        (2.0, I10, I12, I01),
        (2.0, I21, I12, I10),
    ],
    &[
        (1.0, I21, I21, I21),
        (2.0, I21, I10, I10),
        (2.0, I21, I01, I01),
        (2.0, I21, I12, I12),
        (1.0, I10, I10, I01),
        (2.0, I10, I01, I12),
    ],
    &[
        (1.0, I12, I12, I12),
        (2.0, I12, I10, I10),
        (2.0, I12, I01, I01),
        (2.0, I12, I21, I21),
        (1.0, I01, I01, I10),
        (2.0, I10, I01, I21),
    ],
];

/// Coefficients `(C10, C01, C21, C12)` of `e^{iΩt}` for the four frequencies in
/// `|a|² a`, where `a = S10 e^{iΩ₁t} + S01 e^{iΩ₂t} + S21 e^{i(2Ω₁−Ω₂)t} + S12 e^{i(−Ω₁+2Ω₂)t}`.
pub fn cubic_coefficients(
    s10: Complex64,
    s01: Complex64,
    s21: Complex64,
    s12: Complex64,
) -> (Complex64, Complex64, Complex64, Complex64) {
    let s = [s10, s01, s21, s12];
    let c = |terms: &[Monomial]| terms.iter().fold(ZERO, |acc, &(k, a, b, cc)| acc + s[a] * s[b] * s[cc].conj() * k);
    (c(MONOMIALS[0]), c(MONOMIALS[1]), c(MONOMIALS[2]), c(MONOMIALS[3]))
}

/// The four output frequencies `[Ω₁, Ω₂, 2Ω₁ − Ω₂, −Ω₁ + 2Ω₂]`.
pub fn two_tone_frequencies(omega1: f64, omega2: f64) -> [f64; 4] {
    [omega1, omega2, 2.0 * omega1 - omega2, -omega1 + 2.0 * omega2]
}

/// Projected nonlinear terms `(C_a, u_n)_D` via tensor contractions.
pub fn two_tone_projections_tensor(system: &ModalSystem, freqs: &[f64; 4], x: &[Vec<Complex64>; 4]) -> [Vec<Complex64>; 4] {
    let s: Vec<Vec<Complex64>> = (0..4).map(|a| x[a].iter().map(|z| z * freqs[a]).collect()).collect();
    let n = system.n();
    let mut out: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![ZERO; n]);
    for (blk, terms) in MONOMIALS.iter().enumerate() {
        for &(k, a, b, c) in terms.iter() {
            let w = contract(system, &s[a], &s[b], &s[c]);
            for (o, v) in out[blk].iter_mut().zip(w) {
                *o += v * k;
            }
        }
    }
    out
}

/// Projected nonlinear terms `(C_a, u_n)_D` by applying [`cubic_coefficients`]
/// pointwise at interior quadrature nodes.
pub fn two_tone_projections_pointwise(
    samples: &Samples,
    freqs: &[f64; 4],
    x: &[Vec<Complex64>; 4],
) -> [Vec<Complex64>; 4] {
    let n = samples.values.len();
    let mut out: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![ZERO; n]);
    for (p, node) in samples.nodes.iter().enumerate() {
        let field = |a: usize| -> Complex64 {
            (0..n).fold(ZERO, |acc, i| acc + x[a][i] * samples.values[i][p]) * freqs[a]
        };
        let (c10, c01, c21, c12) = cubic_coefficients(field(0), field(1), field(2), field(3));
        for (blk, cv) in [c10, c01, c21, c12].into_iter().enumerate() {
            for m in 0..n {
                out[blk][m] += cv * samples.values[m][p].conj() * node.weight;
            }
        }
    }
    out
}

/// Independent residual of the four two-tone blocks (stacked).
pub fn two_tone_residual(
    system: &ModalSystem,
    omega1: f64,
    omega2: f64,
    f1: f64,
    f2: f64,
    beta: f64,
    x: &[Vec<Complex64>; 4],
) -> Vec<Complex64> {
    let freqs = two_tone_frequencies(omega1, omega2);
    let forcing = [f1, f2, 0.0, 0.0];
    let g = system.forcing();
    let proj = two_tone_projections_tensor(system, &freqs, x);
    let mut out = Vec::with_capacity(4 * system.n());
    for a in 0..4 {
        let gp = system.apply_gt(&proj[a]);
        for m in 0..system.n() {
            let d = system.omegas[m] * system.omegas[m] - freqs[a] * freqs[a];
            out.push(d * x[a][m] + g[m] * forcing[a] - I * beta * gp[m]);
        }
    }
    out
}

fn split4(v: &[Complex64], n: usize) -> [Vec<Complex64>; 4] {
    std::array::from_fn(|a| v[a * n..(a + 1) * n].to_vec())
}

/// Minimum separation, relative to `max(Ω₁, Ω₂)`, between the four output frequencies.
pub const DEFAULT_COLLISION_FLOOR: f64 = 1e-6;

fn two_tone_newton(
    system: &ModalSystem,
    omega1: f64,
    omega2: f64,
    f1: f64,
    f2: f64,
    beta: f64,
    start: &[Vec<Complex64>; 4],
) -> Result<([Vec<Complex64>; 4], usize, f64)> {
    let n = system.n();
    let freqs = two_tone_frequencies(omega1, omega2);
    let passive = [solve_passive(system, omega1, f1)?, solve_passive(system, omega2, f2)?, vec![ZERO; n], vec![ZERO; n]];
    let xp: Vec<Complex64> = passive.concat();
    let d: Vec<Complex64> = (0..4)
        .flat_map(|a| system.omegas.iter().map(move |w| w * w - freqs[a] * freqs[a]))
        .collect();
    let gt = gt_matrix(system);
    let residual = |y: &[Complex64]| -> Vec<Complex64> {
        let x = split4(&add(&xp, y), n);
        let proj = two_tone_projections_tensor(system, &freqs, &x);
        let mut out = Vec::with_capacity(4 * n);
        for (a, p) in proj.iter().enumerate() {
            let gp = system.apply_gt(p);
            for m in 0..n {
                out.push(d[a * n + m] * y[a * n + m] - I * beta * gp[m]);
            }
        }
        out
    };
    let jacobian = |y: &[Complex64]| {
        let x = split4(&add(&xp, y), n);
        let s: Vec<Vec<Complex64>> = (0..4).map(|a| x[a].iter().map(|z| z * freqs[a]).collect()).collect();
        let mut j1 = DMatrix::from_diagonal(&DVector::from_vec(d.clone()));
        let mut j2 = DMatrix::from_element(4 * n, 4 * n, ZERO);
        for (blk, terms) in MONOMIALS.iter().enumerate() {
            for &(k, a, b, c) in terms.iter() {
                let scale = -I * beta * k;
                // ∂/∂X_a and ∂/∂X_b through the two unconjugated slots.
                let da = &gt * slot1(system, &s[b], &s[c]) * (scale * freqs[a]);
                let db = &gt * slot1(system, &s[a], &s[c]) * (scale * freqs[b]);
                let dc = &gt * slot3(system, &s[a], &s[b]) * (scale * freqs[c]);
                let mut v = j1.view_mut((blk * n, a * n), (n, n));
                v += &da;
                let mut v = j1.view_mut((blk * n, b * n), (n, n));
                v += &db;
                let mut v = j2.view_mut((blk * n, c * n), (n, n));
                v += &dc;
            }
        }
        (j1, j2)
    };
    let y0: Vec<Complex64> = start.concat().iter().zip(&xp).map(|(s, p)| s - p).collect();
    let out = newton(residual, jacobian, y0, divergence_bound(norm(&xp)))?;
    let x = split4(&add(&xp, &out.y), n);
    let cert = norm(&two_tone_residual(system, omega1, omega2, f1, f2, beta, &x));
    Ok((x, out.iters, cert))
}

/// Solves the four coupled two-tone blocks on the branch connected to the
/// passive response.
pub fn solve_two_tone(
    system: &ModalSystem,
    omega1: f64,
    omega2: f64,
    f1: f64,
    f2: f64,
    beta: f64,
) -> Result<TwoToneSolution> {
    solve_two_tone_with(system, omega1, omega2, f1, f2, beta, DEFAULT_COLLISION_FLOOR)
}

pub fn solve_two_tone_with(
    system: &ModalSystem,
    omega1: f64,
    omega2: f64,
    f1: f64,
    f2: f64,
    beta: f64,
    collision_floor: f64,
) -> Result<TwoToneSolution> {
    let freqs = two_tone_frequencies(omega1, omega2);
    let scale = omega1.abs().max(omega2.abs());
    for a in 0..4 {
        for b in a + 1..4 {
            if (freqs[a] - freqs[b]).abs() <= collision_floor * scale {
                return Err(Error::InvalidParameter(format!(
                    "two-tone frequencies collide: Ω₁ = {omega1}, Ω₂ = {omega2}"
                )));
            }
        }
    }
    let n = system.n();
    let tol_for = |s: f64| CERT_TOL * (1.0 + s * (f1.abs() + f2.abs()));
    let start_for = |s: f64| -> Result<[Vec<Complex64>; 4]> {
        Ok([solve_passive(system, omega1, f1 * s)?, solve_passive(system, omega2, f2 * s)?, vec![ZERO; n], vec![ZERO; n]])
    };
    let mut last = f64::INFINITY;
    if let Ok((x, iters, cert)) = two_tone_newton(system, omega1, omega2, f1, f2, beta, &start_for(1.0)?) {
        if cert <= tol_for(1.0) {
            return Ok(build_two_tone(omega1, omega2, f1, f2, beta, x, iters, cert, 0));
        }
        last = cert;
    }
    let mut levels = 0;
    let mut current = None;
    while levels < MAX_CONTINUATION {
        levels += 1;
        let s = 0.5f64.powi(levels as i32);
        if let Ok((x, _, cert)) = two_tone_newton(system, omega1, omega2, f1 * s, f2 * s, beta, &start_for(s)?) {
            if cert <= tol_for(s) {
                current = Some(x);
                break;
            }
        }
    }
    let mut x = current.ok_or(Error::NoConvergence { iterations: levels, residual: last })?;
    let mut total = 0;
    let mut cert = f64::INFINITY;
    for l in (0..levels).rev() {
        let s = 0.5f64.powi(l as i32);
        let (xn, it, c) = two_tone_newton(system, omega1, omega2, f1 * s, f2 * s, beta, &x)?;
        total += it;
        if c > tol_for(s) {
            return Err(Error::NoConvergence { iterations: total, residual: c });
        }
        x = xn;
        cert = c;
    }
    Ok(build_two_tone(omega1, omega2, f1, f2, beta, x, total, cert, levels))
}

#[allow(clippy::too_many_arguments)]
fn build_two_tone(
    omega1: f64,
    omega2: f64,
    f1: f64,
    f2: f64,
    beta: f64,
    x: [Vec<Complex64>; 4],
    newton_iters: usize,
    residual_norm: f64,
    continuation_steps: usize,
) -> TwoToneSolution {
    let [x10, x01, x21, x12] = x;
    TwoToneSolution {
        omega1, omega2, f1, f2, beta, x10, x01, x21, x12, newton_iters, residual_norm, continuation_steps,
    }
}

/// Dormand–Prince 5(4) step for `dw/dt = (μ + iν) w − |w|² w + F`.
fn dp_step(w: Complex64, h: f64, lin: Complex64, f: f64) -> (Complex64, f64) {
    let rhs = |w: Complex64| lin * w - w * w.norm_sqr() + f;
    let k1 = rhs(w);
    let k2 = rhs(w + k1 * (h / 5.0));
    let k3 = rhs(w + (k1 * (3.0 / 40.0) + k2 * (9.0 / 40.0)) * h);
    let k4 = rhs(w + (k1 * (44.0 / 45.0) - k2 * (56.0 / 15.0) + k3 * (32.0 / 9.0)) * h);
    let k5 = rhs(
        w + (k1 * (19372.0 / 6561.0) - k2 * (25360.0 / 2187.0) + k3 * (64448.0 / 6561.0) - k4 * (212.0 / 729.0)) * h,
    );
    let k6 = rhs(
        w + (k1 * (9017.0 / 3168.0) - k2 * (355.0 / 33.0) + k3 * (46732.0 / 5247.0) + k4 * (49.0 / 176.0)
            - k5 * (5103.0 / 18656.0))
            * h,
    );
    let y5 = w
        + (k1 * (35.0 / 384.0) + k3 * (500.0 / 1113.0) + k4 * (125.0 / 192.0) - k5 * (2187.0 / 6784.0)
            + k6 * (11.0 / 84.0))
            * h;
    let k7 = rhs(y5);
    let err = (k1 * (71.0 / 57600.0) - k3 * (71.0 / 16695.0) + k4 * (71.0 / 1920.0) - k5 * (17253.0 / 339200.0)
        + k6 * (22.0 / 525.0)
        - k7 * (1.0 / 40.0))
        * h;
    (y5, err.norm())
}

/// Amplitudes below this are treated as zero by the drift test.
const ORACLE_FLOOR: f64 = 1e-12;
const ORACLE_T_CAP: f64 = 1e12;

/// Steady forced amplitude of `dz/dt = (μ + iω₀) z − |z|² z + F e^{iΩt}`, `z(0) = 0`.
///
/// Integrated in the frame rotating with the forcing, `w = z e^{−iΩt}`, where
/// the steady state is a fixed point. When `F = 0` and `μ > 0` the origin is
/// an unstable equilibrium, so a tiny seed `w(0) = 1e−6` starts the limit cycle.
pub fn single_hopf_steady_state(mu: f64, omega0: f64, omega: f64, f: f64) -> Result<HopfOracleResult> {
    if ![mu, omega0, omega, f].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("oracle parameters must be finite".into()));
    }
    let lin = Complex64::new(mu, omega0 - omega);
    let mut w = if f == 0.0 && mu > 0.0 { Complex64::new(1e-6, 0.0) } else { ZERO };
    // Relaxation time scale: linear rate, or the cubic rate at the expected amplitude.
    let amp_guess = f.abs().cbrt().max(mu.max(0.0).sqrt()).max(1e-12);
    let rate = mu.abs().max(amp_guess * amp_guess).max((omega0 - omega).abs()).max(1e-12);
    let mut horizon = 50.0 / rate;
    let mut t = 0.0;
    let mut h = 1e-3 / rate.max(1.0);
    let (rtol, atol) = (1e-11, 1e-16);
    loop {
        let window_start = 0.9 * horizon;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        while t < horizon {
            let hh = h.min(horizon - t);
            let (wn, err) = dp_step(w, hh, lin, f);
            let scale = atol + rtol * w.norm().max(wn.norm());
            if err <= scale || hh < 1e-14 * horizon {
                t += hh;
                w = wn;
                if t >= window_start {
                    lo = lo.min(w.norm());
                    hi = hi.max(w.norm());
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0) };
            h = hh * fac;
        }
        let amp = w.norm();
        let drift = if hi <= ORACLE_FLOOR { 0.0 } else { (hi - lo) / amp.max(ORACLE_FLOOR) };
        if drift < 1e-6 {
            return Ok(HopfOracleResult { mu, omega0, omega, f, steady_amplitude: amp, drift, t_final: t });
        }
        if horizon >= ORACLE_T_CAP {
            return Err(Error::NoConvergence { iterations: 0, residual: drift });
        }
        horizon *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_coefficients_trivial_cases() {
        let z = ZERO;
        assert_eq!(cubic_coefficients(z, z, z, z), (z, z, z, z));
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(cubic_coefficients(one, z, z, z), (one, z, z, z));
    }

    #[test]
    fn oracle_trivial_limits() {
        let r = single_hopf_steady_state(-0.5, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(r.steady_amplitude, 0.0);
        let r = single_hopf_steady_state(0.25, 1.0, 1.0, 0.0).unwrap();
        assert!((r.steady_amplitude - 0.5).abs() < 1e-8);
    }

    #[test]
    fn oracle_matches_fixed_point_at_resonance() {
        for f in [1e-6, 1e-3, 1e-1] {
            let r = single_hopf_steady_state(0.0, 2.0, 2.0, f).unwrap();
            assert!((r.steady_amplitude - f64::cbrt(f)).abs() < 1e-6 * f64::cbrt(f));
        }
    }

    #[test]
    fn realify_matches_direct_linearisation() {
        let j1 = DMatrix::from_row_slice(1, 1, &[Complex64::new(1.0, 2.0)]);
        let j2 = DMatrix::from_row_slice(1, 1, &[Complex64::new(-0.5, 0.25)]);
        let r = realify(&j1, &j2);
        let dy = Complex64::new(0.3, -0.7);
        let dr = j1[(0, 0)] * dy + j2[(0, 0)] * dy.conj();
        assert!((r[(0, 0)] * dy.re + r[(0, 1)] * dy.im - dr.re).abs() < 1e-15);
        assert!((r[(1, 0)] * dy.re + r[(1, 1)] * dy.im - dr.im).abs() < 1e-15);
    }
}
