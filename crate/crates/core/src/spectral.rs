//! Subwavelength resonances and eigenmodes of the boundary system.
//!
//! Resonances are the complex `ω` at which the boundary matrix is singular.
//! The search scans `σ_min/σ_max` of the row-equilibrated matrix over a
//! rectangle of the complex plane (at a cheap scan order), then polishes every
//! local minimum — and the isolated-disk resonances — with Muller's method on
//! the determinant ratio `det A(ω) / det A(ω_ref)`. Missing roots are hunted
//! with deflation; each root is re-solved at order `M + 2` to check the
//! multipole truncation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    assemble_boundary_system, mirror_operator, FieldEvaluator, MultipoleDensity, WaveParams,
};
use crate::error::{Error, Result};
use crate::geometry::ResonatorArray;
use crate::quadrature::{disk_nodes, QuadratureCounts};
use crate::special::{bessel_j_seq, derivatives, hankel1_seq};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub omega: Complex64,
    /// `σ_min/σ_max` of the row-equilibrated boundary matrix at `omega`.
    pub residual: f64,
    pub m_max: usize,
    /// `|ω(M+2) − ω(M)| / |ω(M)|`.
    pub refinement_drift: f64,
}

impl Resonance {
    pub fn re(&self) -> f64 {
        self.omega.re
    }

    pub fn abs(&self) -> f64 {
        self.omega.norm()
    }
}

/// Parameters of the resonance search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpec {
    /// Upper end of the real-part window; defaults to the subwavelength cutoff.
    pub omega_max: Option<f64>,
    /// Scan points along the real axis.
    pub re_points: usize,
    /// Scan rows along the imaginary axis.
    pub im_points: usize,
    /// Multipole order used for the coarse scan only.
    pub scan_order: usize,
    /// Largest accepted residual `σ_min/σ_max`.
    pub tolerance: f64,
    /// Largest accepted relative change under `M → M + 2`.
    pub max_drift: f64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            omega_max: None,
            re_points: 240,
            im_points: 7,
            scan_order: 2,
            tolerance: 1e-10,
            max_drift: 1e-4,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.re_points < 8 || self.im_points < 3 {
            return Err(Error::InvalidParameter("scan grid needs at least 8 x 3 points".into()));
        }
        if self.scan_order < 1 {
            return Err(Error::InvalidParameter("scan_order must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.max_drift > 0.0) {
            return Err(Error::InvalidParameter("search tolerances must be positive".into()));
        }
        if let Some(w) = self.omega_max {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("omega_max must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Largest `Re ω` at which every wavelength exceeds ten resonator diameters.
pub fn subwavelength_cutoff(array: &ResonatorArray, params: &WaveParams) -> f64 {
    let v = params.v.min(params.v_b);
    2.0 * PI * v / (10.0 * 2.0 * array.max_radius())
}

/// Divides each row by its largest entry; leaves the null space unchanged.
pub fn row_equilibrated(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut b = a.clone();
    for mut row in b.row_iter_mut() {
        let m = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m > 0.0 {
            row /= Complex64::new(m, 0.0);
        }
    }
    b
}

/// `σ_min/σ_max` of the row-equilibrated matrix.
pub fn singularity_ratio(a: &DMatrix<Complex64>) -> f64 {
    let s = row_equilibrated(a).singular_values();
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// `log det a` from the LU pivots (any branch; only differences are used).
pub fn log_det(a: &DMatrix<Complex64>) -> Complex64 {
    let lu = a.clone().lu();
    let sign: Complex64 = lu.p().determinant();
    let mut acc = if sign.re < 0.0 { Complex64::new(0.0, PI) } else { ZERO };
    for d in lu.u().diagonal().iter() {
        acc += d.ln();
    }
    acc
}

/// Muller's method; returns the root and the number of iterations.
pub fn muller<F>(f: F, x0: Complex64, x1: Complex64, x2: Complex64, tol: f64, max_iter: usize) -> Result<(Complex64, usize)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let (mut x0, mut x1, mut x2) = (x0, x1, x2);
    let (mut f0, mut f1, mut f2) = (f(x0)?, f(x1)?, f(x2)?);
    for it in 1..=max_iter {
        if f2 == ZERO {
            return Ok((x2, it));
        }
        let h1 = x1 - x0;
        let h2 = x2 - x1;
        let d1 = (f1 - f0) / h1;
        let d2 = (f2 - f1) / h2;
        let a = (d2 - d1) / (h2 + h1);
        let b = a * h2 + d2;
        let disc = (b * b - a * f2 * 4.0).sqrt();
        let den = if (b + disc).norm() > (b - disc).norm() { b + disc } else { b - disc };
        let dx = if den == ZERO { (x2 - x1) * 0.5 } else { -f2 * 2.0 / den };
        if !(dx.re.is_finite() && dx.im.is_finite()) {
            break;
        }
        x0 = x1;
        x1 = x2;
        x2 += dx;
        f0 = f1;
        f1 = f2;
        f2 = f(x2)?;
        if dx.norm() <= tol * x2.norm() {
            return Ok((x2, it));
        }
    }
    Err(Error::ResonanceSearch(format!("Muller iteration did not converge near {x2}")))
}

/// Monopole resonance of a lone disk (the `m = 0` block of its 2×2 system).
pub fn isolated_resonance(radius: f64, params: &WaveParams) -> Result<Complex64> {
    let det = |w: Complex64| -> Result<Complex64> {
        let (k, kb) = (params.k(w) * radius, params.k_b(w) * radius);
        let (je, he) = (bessel_j_seq(1, k)?, hankel1_seq(1, k)?);
        let (jb, hb) = (bessel_j_seq(1, kb)?, hankel1_seq(1, kb)?);
        let (hpe, jpb) = (derivatives(&he)[0], derivatives(&jb)[0]);
        // [[S_b, -S], [D_in, -δ D_out]] with the common factor -iπr/2 dropped.
        let s_b = jb[0] * hb[0];
        let s = je[0] * he[0];
        let d_in = params.k_b(w) * hb[0] * jpb;
        let d_out = params.k(w) * je[0] * hpe;
        Ok(-s_b * d_out * params.delta + s * d_in)
    };
    // Leading-order (Minnaert-type) estimate as the starting point.
    let mut w0 = 0.1 * params.v_b / radius;
    for _ in 0..50 {
        let l = (params.v / (w0 * radius)).ln().max(1.0);
        w0 = params.v_b / radius * (2.0 * params.delta / l).sqrt();
    }
    let x = Complex64::new(w0, -0.1 * w0);
    muller(det, x, x * 1.01, x * 0.99 + Complex64::new(0.0, 1e-3 * w0), 1e-14, 200).map(|r| r.0)
}

/// Generic complex-frequency search over a family of matrices `mat(ω, M)`.
struct Search<'a, F>
where
    F: Fn(Complex64, usize) -> Result<DMatrix<Complex64>> + Sync,
{
    mat: &'a F,
    m_max: usize,
    spec: SearchSpec,
    omega_max: f64,
    reference: Complex64,
}

impl<F> Search<'_, F>
where
    F: Fn(Complex64, usize) -> Result<DMatrix<Complex64>> + Sync,
{
    fn det_ratio(&self, w: Complex64, m: usize, reference_logdet: Complex64) -> Result<Complex64> {
        Ok((log_det(&(self.mat)(w, m)?) - reference_logdet).exp())
    }

    fn scan(&self, im_lo: f64, im_hi: f64) -> Result<Vec<Complex64>> {
        let (nr, ni) = (self.spec.re_points, self.spec.im_points);
        let points: Vec<Complex64> = (0..ni)
            .flat_map(|b| {
                let im = im_lo + (im_hi - im_lo) * b as f64 / (ni - 1) as f64;
                (1..=nr).map(move |a| Complex64::new(self.omega_max * a as f64 / nr as f64, im))
            })
            .collect();
        let values: Vec<f64> = points
            .par_iter()
            .map(|&w| (self.mat)(w, self.spec.scan_order).map(|a| singularity_ratio(&a)))
            .collect::<Result<_>>()?;
        let at = |a: isize, b: isize| -> f64 {
            if a < 0 || b < 0 || a >= nr as isize || b >= ni as isize {
                f64::INFINITY
            } else {
                values[b as usize * nr + a as usize]
            }
        };
        let mut minima = Vec::new();
        for b in 0..ni as isize {
            for a in 0..nr as isize {
                let v = at(a, b);
                let is_min = (-1..=1).all(|da| (-1..=1).all(|db| (da == 0 && db == 0) || v <= at(a + da, b + db)));
                if is_min && a > 0 && a + 1 < nr as isize {
                    minima.push((v, points[b as usize * nr + a as usize]));
                }
            }
        }
        minima.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(minima.into_iter().map(|m| m.1).collect())
    }

    fn polish(&self, seed: Complex64, found: &[Complex64], ref_ld: Complex64) -> Option<Complex64> {
        let h = seed.norm() * 1e-3;
        let f = |w: Complex64| -> Result<Complex64> {
            let mut v = self.det_ratio(w, self.m_max, ref_ld)?;
            for r in found {
                v /= w - r;
            }
            Ok(v)
        };
        let x1 = seed + Complex64::new(h, 0.0);
        let x2 = seed + Complex64::new(-h, 0.5 * h);
        let (w, _) = muller(f, seed, x1, x2, 1e-14, 100).ok()?;
        (w.re > 0.0 && w.re <= self.omega_max && w.im.abs() < w.re).then_some(w)
    }

    fn run(&self, seeds: &[Complex64], target: Option<usize>) -> Result<Vec<Complex64>> {
        let ref_ld = log_det(&(self.mat)(self.reference, self.m_max)?);
        let polished: Vec<Option<Complex64>> = seeds.par_iter().map(|&s| self.polish(s, &[], ref_ld)).collect();
        let mut roots: Vec<Complex64> = Vec::new();
        for w in polished.into_iter().flatten() {
            merge(&mut roots, w);
        }
        if let Some(n) = target {
            // Deflation: divide out the roots already found and restart from every seed.
            let mut progress = true;
            while roots.len() < n && progress {
                progress = false;
                for &s in seeds {
                    if let Some(w) = self.polish(s, &roots, ref_ld) {
                        if merge(&mut roots, w) {
                            progress = true;
                            break;
                        }
                    }
                }
            }
        }
        Ok(roots)
    }
}

/// Adds `w` unless it duplicates an existing root; returns whether it was added.
fn merge(roots: &mut Vec<Complex64>, w: Complex64) -> bool {
    if roots.iter().any(|r| (r - w).norm() <= 1e-8 * w.norm()) {
        return false;
    }
    roots.push(w);
    true
}

fn isolated_seeds(array: &ResonatorArray, params: &WaveParams) -> Result<Vec<Complex64>> {
    let mut radii = array.radii();
    radii.dedup();
    radii.iter().map(|&r| isolated_resonance(r, params)).collect()
}

fn scan_band(seeds: &[Complex64]) -> (f64, f64) {
    let s = seeds.iter().map(|w| w.im.abs()).fold(0.0, f64::max).max(1e-12);
    (-3.0 * s, 3.0 * s)
}

fn run_search<F>(
    mat: &F,
    array: &ResonatorArray,
    params: &WaveParams,
    m_max: usize,
    spec: &SearchSpec,
    target: Option<usize>,
) -> Result<Vec<Resonance>>
where
    F: Fn(Complex64, usize) -> Result<DMatrix<Complex64>> + Sync,
{
    spec.validate()?;
    let cutoff = subwavelength_cutoff(array, params);
    let omega_max = spec.omega_max.unwrap_or(cutoff);
    if omega_max > cutoff * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "omega_max = {omega_max} exceeds the subwavelength cutoff {cutoff}"
        )));
    }
    let iso = isolated_seeds(array, params)?;
    let search = Search { mat, m_max, spec: *spec, omega_max, reference: Complex64::new(0.5 * omega_max, 0.0) };
    let (lo, hi) = scan_band(&iso);
    let mut seeds = search.scan(lo, hi)?;
    seeds.extend(iso.iter().copied());
    let roots = search.run(&seeds, target)?;

    let mut out: Vec<Resonance> = roots
        .par_iter()
        .map(|&w| {
            let residual = singularity_ratio(&mat(w, m_max)?);
            let refined = Search { m_max: m_max + 2, ..search };
            let ref_ld = log_det(&mat(refined.reference, m_max + 2)?);
            let w2 = refined.polish(w, &[], ref_ld).ok_or_else(|| {
                Error::ResonanceSearch(format!("refinement at M = {} failed near {w}", m_max + 2))
            })?;
            Ok(Resonance { omega: w, residual, m_max, refinement_drift: (w2 - w).norm() / w.norm() })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.omega.re.total_cmp(&b.omega.re));
    Ok(out)
}

/// Finds the `N` subwavelength resonances, sorted by real part.
pub fn find_resonances(
    array: &ResonatorArray,
    params: &WaveParams,
    m_max: usize,
    spec: &SearchSpec,
) -> Result<Vec<Resonance>> {
    let mat = |w: Complex64, m: usize| assemble_boundary_system(array, params, w, m).map(|s| s.matrix);
    let n = array.len();
    let found = run_search(&mat, array, params, m_max, spec, Some(n))?;
    if found.len() != n {
        return Err(Error::ResonanceSearch(format!(
            "found {} resonances in the window, expected {n}",
            found.len()
        )));
    }
    for r in &found {
        if r.residual > spec.tolerance {
            return Err(Error::ResonanceSearch(format!(
                "resonance {} has residual {:e} above tolerance {:e}",
                r.omega, r.residual, spec.tolerance
            )));
        }
        if r.refinement_drift >= spec.max_drift {
            return Err(Error::ResonanceSearch(format!(
                "resonance {} moved by {:e} (relative) under M -> M+2",
                r.omega, r.refinement_drift
            )));
        }
    }
    Ok(found)
}

/// Mirror parity of a mode on a mirror-symmetric array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Orthonormal basis (columns) of the `parity` eigenspace of the mirror operator.
pub fn parity_basis(array: &ResonatorArray, m_max: usize, parity: Parity) -> Result<DMatrix<Complex64>> {
    let p = mirror_operator(array, m_max)
        .ok_or_else(|| Error::Geometry("array is not mirror symmetric".into()))?;
    let dim = p.nrows();
    let s = if parity == Parity::Even { 1.0 } else { -1.0 };
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    let mut used = vec![false; dim];
    for c in 0..dim {
        if used[c] {
            continue;
        }
        let (pc, sign) = (0..dim).find(|&r| p[(r, c)] != ZERO).map(|r| (r, p[(r, c)].re)).expect("permutation");
        used[c] = true;
        used[pc] = true;
        let mut v = DVector::from_element(dim, ZERO);
        if pc == c {
            if sign == s {
                v[c] = Complex64::new(1.0, 0.0);
                cols.push(v);
            }
        } else {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            v[c] = Complex64::new(h, 0.0);
            v[pc] = Complex64::new(s * sign * h, 0.0);
            cols.push(v);
        }
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Resonances of the boundary system restricted to one mirror-parity sector.
pub fn find_parity_resonances(
    array: &ResonatorArray,
    params: &WaveParams,
    m_max: usize,
    spec: &SearchSpec,
    parity: Parity,
) -> Result<Vec<Resonance>> {
    let bases: Vec<(usize, DMatrix<Complex64>)> = [spec.scan_order, m_max, m_max + 2]
        .iter()
        .map(|&m| parity_basis(array, m, parity).map(|b| (m, b)))
        .collect::<Result<_>>()?;
    let mat = |w: Complex64, m: usize| -> Result<DMatrix<Complex64>> {
        let q = &bases.iter().find(|(mm, _)| *mm == m).expect("basis precomputed").1;
        let a = assemble_boundary_system(array, params, w, m)?.matrix;
        Ok(q.adjoint() * a * q)
    };
    run_search(&mat, array, params, m_max, spec, None)
}

/// A resonance together with its normalised multipole density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenmode {
    pub resonance: Resonance,
    /// Density scaled so the interior field has unit `L²(D)` norm and a real,
    /// positive mean over the largest resonator.
    pub density: MultipoleDensity,
    /// Factor applied to the unit right-singular vector to obtain `density`.
    pub normalization: Complex64,
    /// `σ_{min}/σ_{max}` and the next-smallest ratio at the resonance.
    pub singular_ratios: (f64, f64),
}

/// Second-smallest singular ratio below this signals a degenerate null space.
pub const DEGENERACY_RATIO: f64 = 1e-7;

pub fn extract_eigenmode(array: &ResonatorArray, params: &WaveParams, resonance: &Resonance) -> Result<Eigenmode> {
    extract_eigenmode_with(array, params, resonance, &QuadratureCounts::default())
}

/// Unit right-singular vector of the smallest singular value and the two smallest ratios.
fn null_vector(a: &DMatrix<Complex64>) -> Result<(DVector<Complex64>, f64, f64)> {
    let b = row_equilibrated(a);
    let svd = b.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::SingularSystem("SVD failed".into()))?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let max = s[order[s.len() - 1]];
    let first = s[order[0]] / max;
    let second = if s.len() > 1 { s[order[1]] / max } else { f64::INFINITY };
    let v = vt.row(order[0]).adjoint();
    Ok((v, first, second))
}

/// Normalises a density and fixes its phase; returns the scaled density and factor.
fn normalise(
    array: &ResonatorArray,
    params: &WaveParams,
    omega: Complex64,
    density: MultipoleDensity,
    counts: &QuadratureCounts,
) -> Result<(MultipoleDensity, Complex64)> {
    let eval = FieldEvaluator::new(array, params, omega, &density)?;
    let largest = array.largest();
    let mut norm2 = 0.0;
    let mut mean = ZERO;
    for i in 0..array.len() {
        for node in disk_nodes(array, i, counts) {
            let u = eval.value_in(node.region, &node.point);
            norm2 += node.weight * u.norm_sqr();
            if i == largest {
                mean += u * node.weight;
            }
        }
    }
    if !(norm2 > 0.0) || mean == ZERO {
        return Err(Error::SingularSystem("eigenmode has vanishing interior norm or mean".into()));
    }
    let c = (mean.conj() / mean.norm()) / norm2.sqrt();
    Ok((density.scaled(c), c))
}

pub fn extract_eigenmode_with(
    array: &ResonatorArray,
    params: &WaveParams,
    resonance: &Resonance,
    counts: &QuadratureCounts,
) -> Result<Eigenmode> {
    let a = assemble_boundary_system(array, params, resonance.omega, resonance.m_max)?.matrix;
    let (v, first, second) = null_vector(&a)?;
    if second < DEGENERACY_RATIO {
        return Err(Error::DegenerateMode { omega: resonance.omega, ratio: second });
    }
    let raw = MultipoleDensity::from_vector(array.len(), resonance.m_max, &v)?;
    let (density, normalization) = normalise(array, params, resonance.omega, raw, counts)?;
    Ok(Eigenmode { resonance: *resonance, density, normalization, singular_ratios: (first, second) })
}

/// Eigenmode computed inside one parity sector (for symmetric arrays, where
/// the full null space may be degenerate).
pub fn extract_parity_eigenmode(
    array: &ResonatorArray,
    params: &WaveParams,
    resonance: &Resonance,
    parity: Parity,
    counts: &QuadratureCounts,
) -> Result<Eigenmode> {
    let q = parity_basis(array, resonance.m_max, parity)?;
    let a = assemble_boundary_system(array, params, resonance.omega, resonance.m_max)?.matrix;
    let (y, first, second) = null_vector(&(q.adjoint() * &a * &q))?;
    let v = &q * y;
    let raw = MultipoleDensity::from_vector(array.len(), resonance.m_max, &v)?;
    let (density, normalization) = normalise(array, params, resonance.omega, raw, counts)?;
    Ok(Eigenmode { resonance: *resonance, density, normalization, singular_ratios: (first, second) })
}
