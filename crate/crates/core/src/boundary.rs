//! Multipole discretisation of the two-dimensional Helmholtz transmission
//! problem on a union of disjoint disks.
//!
//! The field is represented by single-layer potentials: outside the disks
//! `u = S^k[ψ]` with `k = ω/v`, inside `u = S^{k_b}[φ]` with `k_b = ω/v_b`, the
//! densities living on every circle. A density `e^{imθ}` on a circle of radius
//! `r` produces
//!
//! ```text
//! inside  (ρ < r):  -(iπr/2) H_m(kr) J_m(kρ) e^{imθ}
//! outside (ρ > r):  -(iπr/2) J_m(kr) H_m(kρ) e^{imθ}
//! ```
//!
//! and outgoing waves about one centre are re-expanded about another with
//! Graf's addition theorem. Unknowns are ordered `[φ_1 … φ_N, ψ_1 … ψ_N]`,
//! each block holding Fourier orders `-M..=M`; rows are continuity of `u`
//! on every circle followed by the flux condition `∂_ν u_- − δ ∂_ν u_+ = 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, ResonatorArray};
use crate::special::{bessel_j_seq, derivatives, hankel1, hankel1_seq};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Points closer than this (relative to the radius) to a circle are treated as on it.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub v: f64,
    pub v_b: f64,
    pub delta: f64,
    pub tau: f64,
}

impl WaveParams {
    pub fn new(v: f64, v_b: f64, delta: f64) -> Result<Self> {
        let p = WaveParams { v, v_b, delta, tau: v_b / v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::InvalidParameter(format!("v must be positive, got {}", self.v)));
        }
        if !(self.v_b > 0.0 && self.v_b.is_finite()) {
            return Err(Error::InvalidParameter(format!("v_b must be positive, got {}", self.v_b)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        let tau = self.v_b / self.v;
        if (self.tau - tau).abs() > 4.0 * f64::EPSILON * tau {
            return Err(Error::InvalidParameter(format!(
                "tau = {} is inconsistent with v_b / v = {tau}",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn k(&self, omega: Complex64) -> Complex64 {
        omega / self.v
    }

    pub fn k_b(&self, omega: Complex64) -> Complex64 {
        omega / self.v_b
    }
}

/// Which density block an unknown belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Phi = 0,
    Psi = 1,
}

/// Fourier coefficients (orders `-M..=M`) of the interior density `φ` and the
/// exterior density `ψ` on every circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipoleDensity {
    pub m_max: usize,
    pub phi: Vec<Vec<Complex64>>,
    pub psi: Vec<Vec<Complex64>>,
}

impl MultipoleDensity {
    pub fn zeros(n: usize, m_max: usize) -> Self {
        let k = 2 * m_max + 1;
        MultipoleDensity { m_max, phi: vec![vec![ZERO; k]; n], psi: vec![vec![ZERO; k]; n] }
    }

    pub fn n_resonators(&self) -> usize {
        self.phi.len()
    }

    /// Builds a density from a vector laid out like the boundary-system columns.
    pub fn from_vector(n: usize, m_max: usize, x: &DVector<Complex64>) -> Result<Self> {
        let k = 2 * m_max + 1;
        if x.len() != 2 * n * k {
            return Err(Error::InvalidParameter(format!(
                "density vector has length {}, expected {}",
                x.len(),
                2 * n * k
            )));
        }
        let mut d = Self::zeros(n, m_max);
        for i in 0..n {
            for a in 0..k {
                d.phi[i][a] = x[i * k + a];
                d.psi[i][a] = x[(n + i) * k + a];
            }
        }
        Ok(d)
    }

    pub fn to_vector(&self) -> DVector<Complex64> {
        let n = self.n_resonators();
        let k = 2 * self.m_max + 1;
        DVector::from_fn(2 * n * k, |r, _| {
            let (block, rest) = (r / (n * k), r % (n * k));
            let (i, a) = (rest / k, rest % k);
            if block == 0 {
                self.phi[i][a]
            } else {
                self.psi[i][a]
            }
        })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let f = |v: &Vec<Vec<Complex64>>| v.iter().map(|row| row.iter().map(|z| z * c).collect()).collect();
        MultipoleDensity { m_max: self.m_max, phi: f(&self.phi), psi: f(&self.psi) }
    }

    pub fn is_consistent(&self) -> bool {
        let k = 2 * self.m_max + 1;
        self.phi.len() == self.psi.len()
            && self.phi.iter().chain(self.psi.iter()).all(|row| row.len() == k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySystem {
    pub omega: Complex64,
    pub m_max: usize,
    pub n_resonators: usize,
    pub matrix: DMatrix<Complex64>,
}

impl BoundarySystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Position of unknown (`block`, resonator `i`, order `m`), which is also
    /// the row of the continuity (`Phi`) or flux (`Psi`) equation for that pair.
    pub fn index(&self, block: Block, i: usize, m: i32) -> usize {
        layout_index(self.n_resonators, self.m_max, block, i, m)
    }
}

pub fn layout_index(n: usize, m_max: usize, block: Block, i: usize, m: i32) -> usize {
    let k = 2 * m_max + 1;
    (block as usize) * n * k + i * k + (m + m_max as i32) as usize
}

/// `Γ^k(x) = -(i/4) H_0^(1)(k|x|)`.
pub fn fundamental_solution(k: Complex64, x: Point) -> Result<Complex64> {
    let r = x.x.hypot(x.y);
    if r == 0.0 {
        return Err(Error::Singular { function: "fundamental_solution" });
    }
    if k == ZERO {
        return Err(Error::InvalidParameter("wavenumber must be non-zero".into()));
    }
    Ok(-0.25 * I * hankel1(0, k * r)?)
}

fn reflect(seq: &[Complex64], m: i32) -> Complex64 {
    let v = seq[m.unsigned_abs() as usize];
    if m < 0 && m % 2 != 0 {
        -v
    } else {
        v
    }
}

/// Cylinder-function values on one circle at one wavenumber.
struct CircleData {
    j: Vec<Complex64>,
    jp: Vec<Complex64>,
    h: Vec<Complex64>,
    hp: Vec<Complex64>,
}

impl CircleData {
    fn new(kr: Complex64, m_max: usize) -> Result<Self> {
        let j = bessel_j_seq(m_max + 1, kr)?;
        let h = hankel1_seq(m_max + 1, kr)?;
        let jp = derivatives(&j);
        let hp = derivatives(&h);
        Ok(CircleData { j, jp, h, hp })
    }
}

/// Single-layer (`s`) and normal-derivative (`d`) blocks at one wavenumber.
/// `inner` selects the interior one-sided derivative trace on the own circle.
fn layer_blocks(
    array: &ResonatorArray,
    k: Complex64,
    m_max: usize,
    inner: bool,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let n = array.len();
    let kk = 2 * m_max + 1;
    let mm = m_max as i32;
    let circles: Vec<CircleData> = array
        .resonators
        .iter()
        .map(|r| CircleData::new(k * r.radius, m_max))
        .collect::<Result<_>>()?;
    let mut s = DMatrix::from_element(n * kk, n * kk, ZERO);
    let mut d = DMatrix::from_element(n * kk, n * kk, ZERO);
    for i in 0..n {
        let ri = array.resonators[i].radius;
        let pref = Complex64::new(0.0, -PI * ri / 2.0);
        let ci = &circles[i];
        for m in -mm..=mm {
            let col = i * kk + (m + mm) as usize;
            let row = col;
            s[(row, col)] = pref * reflect(&ci.j, m) * reflect(&ci.h, m);
            d[(row, col)] = if inner {
                pref * k * reflect(&ci.h, m) * reflect(&ci.jp, m)
            } else {
                pref * k * reflect(&ci.j, m) * reflect(&ci.hp, m)
            };
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let (dist, alpha) = array.resonators[j].center.polar_about(&array.resonators[i].center);
            let rj = array.resonators[j].radius;
            if !(dist > ri + rj) {
                return Err(Error::Geometry(format!(
                    "resonators {i} and {j} are not disjoint; Graf re-expansion is invalid"
                )));
            }
            let hd = hankel1_seq(2 * m_max, k * dist)?;
            let cj = &circles[j];
            for m in -mm..=mm {
                let col = i * kk + (m + mm) as usize;
                let src = pref * reflect(&ci.j, m);
                for l in -mm..=mm {
                    let row = j * kk + (l + mm) as usize;
                    let t = src * reflect(&hd, m - l) * Complex64::from_polar(1.0, (m - l) as f64 * alpha);
                    s[(row, col)] = t * reflect(&cj.j, l);
                    d[(row, col)] = t * k * reflect(&cj.jp, l);
                }
            }
        }
    }
    Ok((s, d))
}

pub fn assemble_boundary_system(
    array: &ResonatorArray,
    params: &WaveParams,
    omega: Complex64,
    m_max: usize,
) -> Result<BoundarySystem> {
    if omega == ZERO {
        return Err(Error::InvalidParameter("omega must be non-zero".into()));
    }
    if m_max < 1 {
        return Err(Error::InvalidParameter("truncation order M must be at least 1".into()));
    }
    params.validate()?;
    let violations = crate::geometry::validate_array(array);
    if let Some(v) = violations.first() {
        return Err(Error::Geometry(v.to_string()));
    }
    let n = array.len();
    let nk = n * (2 * m_max + 1);
    let (sb, db) = layer_blocks(array, params.k_b(omega), m_max, true)?;
    let (se, de) = layer_blocks(array, params.k(omega), m_max, false)?;
    let mut a = DMatrix::from_element(2 * nk, 2 * nk, ZERO);
    a.view_mut((0, 0), (nk, nk)).copy_from(&sb);
    a.view_mut((0, nk), (nk, nk)).copy_from(&(-se));
    a.view_mut((nk, 0), (nk, nk)).copy_from(&db);
    a.view_mut((nk, nk), (nk, nk)).copy_from(&(de * Complex64::new(-params.delta, 0.0)));
    Ok(BoundarySystem { omega, m_max, n_resonators: n, matrix: a })
}

/// Where a field is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Exterior,
    Interior(usize),
}

/// One-sided trace selector for points on a circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Outside,
}

/// Field of a fixed density at a fixed frequency, with per-circle
/// coefficients precomputed so that repeated evaluation is cheap.
#[derive(Debug, Clone)]
pub struct FieldEvaluator {
    array: ResonatorArray,
    k: Complex64,
    k_b: Complex64,
    m_max: usize,
    /// `ψ_{i,m} · (-iπ r_i/2) J_m(k r_i)`, multiplies `H_m(kρ_i) e^{imθ_i}` outside.
    ext: Vec<Vec<Complex64>>,
    /// `φ_{i,m} · (-iπ r_i/2) H_m(k_b r_i)`, multiplies `J_m(k_bρ_i) e^{imθ_i}` inside disk `i`.
    own: Vec<Vec<Complex64>>,
    /// `φ_{i,m} · (-iπ r_i/2) J_m(k_b r_i)`, multiplies `H_m(k_bρ_i) e^{imθ_i}` inside other disks.
    other: Vec<Vec<Complex64>>,
}

#[derive(Clone, Copy)]
enum Radial {
    Bessel,
    Hankel,
}

impl FieldEvaluator {
    pub fn new(
        array: &ResonatorArray,
        params: &WaveParams,
        omega: Complex64,
        density: &MultipoleDensity,
    ) -> Result<Self> {
        if !density.is_consistent() || density.n_resonators() != array.len() {
            return Err(Error::InvalidParameter("density does not match the array".into()));
        }
        let m_max = density.m_max;
        let mm = m_max as i32;
        let k = params.k(omega);
        let k_b = params.k_b(omega);
        let mut ext = Vec::with_capacity(array.len());
        let mut own = Vec::with_capacity(array.len());
        let mut other = Vec::with_capacity(array.len());
        for (i, r) in array.resonators.iter().enumerate() {
            let pref = Complex64::new(0.0, -PI * r.radius / 2.0);
            let je = bessel_j_seq(m_max, k * r.radius)?;
            let jb = bessel_j_seq(m_max, k_b * r.radius)?;
            let hb = hankel1_seq(m_max, k_b * r.radius)?;
            let mut e = Vec::with_capacity(2 * m_max + 1);
            let mut o = Vec::with_capacity(2 * m_max + 1);
            let mut t = Vec::with_capacity(2 * m_max + 1);
            for m in -mm..=mm {
                let a = (m + mm) as usize;
                e.push(density.psi[i][a] * pref * reflect(&je, m));
                o.push(density.phi[i][a] * pref * reflect(&hb, m));
                t.push(density.phi[i][a] * pref * reflect(&jb, m));
            }
            ext.push(e);
            own.push(o);
            other.push(t);
        }
        Ok(FieldEvaluator { array: array.clone(), k, k_b, m_max, ext, own, other })
    }

    pub fn array(&self) -> &ResonatorArray {
        &self.array
    }

    /// Region containing `x`, or an error when `x` is on a circle.
    pub fn region_of(&self, x: &Point) -> Result<Region> {
        for (i, r) in self.array.resonators.iter().enumerate() {
            let rho = r.center.distance(x);
            if (rho - r.radius).abs() <= BOUNDARY_TOL * r.radius.max(1.0) {
                return Err(Error::OnBoundary { index: i, tol: BOUNDARY_TOL });
            }
            if rho < r.radius {
                return Ok(Region::Interior(i));
            }
        }
        Ok(Region::Exterior)
    }

    pub fn value(&self, x: &Point) -> Result<Complex64> {
        let region = self.region_of(x)?;
        Ok(self.value_in(region, x))
    }

    /// Field at `x` using the representation of `region`; no location check.
    pub fn value_in(&self, region: Region, x: &Point) -> Complex64 {
        let mut u = ZERO;
        for i in 0..self.array.len() {
            u += self.term(region, i, x, false).0;
        }
        u
    }

    /// Field and Cartesian gradient at `x` using the representation of `region`.
    pub fn value_and_gradient_in(&self, region: Region, x: &Point) -> (Complex64, [Complex64; 2]) {
        let mut u = ZERO;
        let mut g = [ZERO; 2];
        for i in 0..self.array.len() {
            let (v, gi) = self.term(region, i, x, true);
            u += v;
            g[0] += gi[0];
            g[1] += gi[1];
        }
        (u, g)
    }

    pub fn gradient(&self, x: &Point) -> Result<[Complex64; 2]> {
        let region = self.region_of(x)?;
        Ok(self.value_and_gradient_in(region, x).1)
    }

    /// One-sided trace of `u` and of `∂u/∂ν` (outward normal of circle `j`) at angle `theta`.
    pub fn trace(&self, j: usize, theta: f64, side: Side) -> (Complex64, Complex64) {
        let res = self.array.resonators[j];
        let x = res.boundary_point(theta);
        let normal = [theta.cos(), theta.sin()];
        let mm = self.m_max as i32;
        let (region, k) = match side {
            Side::Inside => (Region::Interior(j), self.k_b),
            Side::Outside => (Region::Exterior, self.k),
        };
        let mut u = ZERO;
        let mut du = ZERO;
        // Own circle: analytic traces of the radial factor at ρ = r.
        let kr = k * res.radius;
        let (radial, coef) = match side {
            Side::Inside => (bessel_j_seq(self.m_max + 1, kr), &self.own[j]),
            Side::Outside => (hankel1_seq(self.m_max + 1, kr), &self.ext[j]),
        };
        let radial = radial.expect("argument range checked at construction");
        let dradial = derivatives(&radial);
        for m in -mm..=mm {
            let e = Complex64::from_polar(1.0, m as f64 * theta);
            let c = coef[(m + mm) as usize];
            u += c * reflect(&radial, m) * e;
            du += c * k * reflect(&dradial, m) * e;
        }
        for i in 0..self.array.len() {
            if i == j {
                continue;
            }
            let (v, g) = self.term(region, i, &x, true);
            u += v;
            du += g[0] * normal[0] + g[1] * normal[1];
        }
        (u, du)
    }

    /// Contribution of circle `i` to the field (and optionally gradient) at `x`.
    fn term(&self, region: Region, i: usize, x: &Point, with_gradient: bool) -> (Complex64, [Complex64; 2]) {
        let (k, coef, kind) = match region {
            Region::Exterior => (self.k, &self.ext[i], Radial::Hankel),
            Region::Interior(j) if j == i => (self.k_b, &self.own[i], Radial::Bessel),
            Region::Interior(_) => (self.k_b, &self.other[i], Radial::Hankel),
        };
        let (rho, theta) = x.polar_about(&self.array.resonators[i].center);
        let order = self.m_max + usize::from(with_gradient);
        let z = k * rho;
        let seq = match kind {
            Radial::Bessel => bessel_j_seq(order, z),
            Radial::Hankel => hankel1_seq(order, z),
        }
        .expect("argument range checked at construction");
        let mm = self.m_max as i32;
        let mut u = ZERO;
        let mut plus = ZERO;
        let mut minus = ZERO;
        let step = Complex64::from_polar(1.0, theta);
        let mut e = Complex64::from_polar(1.0, -(mm as f64) * theta);
        let e_step_back = step.conj();
        for m in -mm..=mm {
            let c = coef[(m + mm) as usize];
            u += c * reflect(&seq, m) * e;
            if with_gradient {
                // (∂x ± i∂y)[Z_m e^{imθ}] = ∓k Z_{m±1} e^{i(m±1)θ}
                plus -= c * reflect(&seq, m + 1) * e * step;
                minus += c * reflect(&seq, m - 1) * e * e_step_back;
            }
            e *= step;
        }
        if !with_gradient {
            return (u, [ZERO; 2]);
        }
        plus *= k;
        minus *= k;
        let gx = (plus + minus) * 0.5;
        let gy = (plus - minus) * Complex64::new(0.0, -0.5);
        (u, [gx, gy])
    }
}

/// `S_D^{ω/v}[ψ](x)` outside the disks, `S_D^{ω/v_b}[φ](x)` inside.
pub fn evaluate_field(
    array: &ResonatorArray,
    params: &WaveParams,
    omega: Complex64,
    density: &MultipoleDensity,
    x: &Point,
) -> Result<Complex64> {
    FieldEvaluator::new(array, params, omega, density)?.value(x)
}

/// Mirror operator for arrays symmetric under `x1 -> -x1`: maps the density
/// of a field `u` to the density of `u(-x1, x2)`. Returns `None` when the
/// array is not mirror symmetric.
pub fn mirror_operator(array: &ResonatorArray, m_max: usize) -> Option<DMatrix<Complex64>> {
    let n = array.len();
    let partner: Vec<usize> = array
        .resonators
        .iter()
        .map(|r| {
            let image = r.center.mirror_x();
            array.resonators.iter().position(|s| {
                s.center.distance(&image) <= 1e-12 * r.radius && (s.radius - r.radius).abs() <= 1e-12 * r.radius
            })
        })
        .collect::<Option<_>>()?;
    let dim = 2 * n * (2 * m_max + 1);
    let mut p = DMatrix::from_element(dim, dim, ZERO);
    let mm = m_max as i32;
    for block in [Block::Phi, Block::Psi] {
        for (i, &ip) in partner.iter().enumerate() {
            for m in -mm..=mm {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let row = layout_index(n, m_max, block, ip, m);
                let col = layout_index(n, m_max, block, i, -m);
                p[(row, col)] = Complex64::new(sign, 0.0);
            }
        }
    }
    Some(p)
}
