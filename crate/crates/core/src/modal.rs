//! Projection of the wave problem onto the eigenmode basis.
//!
//! Pairings are linear in the first slot and conjugate-linear in the second:
//! `(f, g)_Ω = ∫_Ω f ḡ`. The Gram matrix is `γ_ij = (u_i, u_j)_Q`, the source
//! coupling is `(δ_{x0}, u_n)_Q = ū_n(x0)`, and the cubic tensor is
//! `T[n][i][j][k] = (u_i u_j ū_k, u_n)_D`.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::{FieldEvaluator, WaveParams};
use crate::error::{Error, Result};
use crate::geometry::{Point, ResonatorArray};
use crate::quadrature::{exterior_nodes, inflated_box, interior_nodes, Node, QuadratureCounts, Rect};
use crate::spectral::{extract_eigenmode_with, find_resonances, Eigenmode, Resonance, SearchSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default inflation of the bounding box of `D ∪ {x0}` (fraction of its diagonal).
pub const DEFAULT_Q_INFLATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub q: Rect,
    pub counts: QuadratureCounts,
}

impl QuadratureSpec {
    pub fn for_array(array: &ResonatorArray, inflation: f64, counts: QuadratureCounts) -> Result<Self> {
        if !(inflation > 0.0 && inflation.is_finite()) {
            return Err(Error::Quadrature(format!("Q inflation must be positive, got {inflation}")));
        }
        counts.validate()?;
        Ok(QuadratureSpec { q: inflated_box(array, inflation), counts })
    }

    pub fn refined(&self) -> Self {
        QuadratureSpec { q: self.q, counts: self.counts.refined() }
    }

    pub fn validate(&self, array: &ResonatorArray) -> Result<()> {
        self.counts.validate()?;
        let (x0, x1, y0, y1) = array.bounding_box();
        let q = &self.q;
        if !(q.x0 < x0 && q.x1 > x1 && q.y0 < y0 && q.y1 > y1) {
            return Err(Error::Quadrature("Q must strictly contain every resonator and the source".into()));
        }
        Ok(())
    }
}

/// Field values of every mode at a set of nodes: `values[mode][node]`.
pub struct Samples {
    pub nodes: Vec<Node>,
    pub values: Vec<Vec<Complex64>>,
}

fn evaluators(array: &ResonatorArray, params: &WaveParams, modes: &[Eigenmode]) -> Result<Vec<FieldEvaluator>> {
    modes
        .iter()
        .map(|m| FieldEvaluator::new(array, params, m.resonance.omega, &m.density))
        .collect()
}

fn sample(evals: &[FieldEvaluator], nodes: Vec<Node>) -> Samples {
    let values = evals
        .iter()
        .map(|e| nodes.par_iter().map(|n| e.value_in(n.region, &n.point)).collect())
        .collect();
    Samples { nodes, values }
}

/// Mode values on the interior (disk) rule.
pub fn interior_samples(
    array: &ResonatorArray,
    params: &WaveParams,
    modes: &[Eigenmode],
    counts: &QuadratureCounts,
) -> Result<Samples> {
    Ok(sample(&evaluators(array, params, modes)?, interior_nodes(array, counts)))
}

/// `Σ_nodes w f ḡ` with a fixed summation order.
fn pair(nodes: &[Node], f: &[Complex64], g: &[Complex64]) -> Complex64 {
    nodes.iter().zip(f.iter().zip(g)).fold(ZERO, |acc, (n, (a, b))| acc + a * b.conj() * n.weight)
}

fn gram_from_samples(inner: &Samples, outer: &Samples) -> DMatrix<Complex64> {
    let n = inner.values.len();
    let mut g = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = pair(&inner.nodes, &inner.values[i], &inner.values[j])
                + pair(&outer.nodes, &outer.values[i], &outer.values[j]);
        }
    }
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `γ_ij = ∫_Q u_i ū_j`, Hermitianised. Errors if not positive definite.
pub fn gram_matrix(
    array: &ResonatorArray,
    params: &WaveParams,
    modes: &[Eigenmode],
    quad: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    quad.validate(array)?;
    let evals = evaluators(array, params, modes)?;
    let inner = sample(&evals, interior_nodes(array, &quad.counts));
    let outer = sample(&evals, exterior_nodes(array, &quad.q, &quad.counts)?);
    let g = gram_from_samples(&inner, &outer);
    check_positive_definite(&g)?;
    Ok(g)
}

fn check_positive_definite(g: &DMatrix<Complex64>) -> Result<()> {
    if g.clone().cholesky().is_none() {
        return Err(Error::Quadrature(
            "Gram matrix is not positive definite (quadrature too coarse or modes dependent)".into(),
        ));
    }
    Ok(())
}

/// `(δ_{x0}, u_n)_Q = conj(u_n(x0))`.
pub fn source_coupling(
    array: &ResonatorArray,
    params: &WaveParams,
    modes: &[Eigenmode],
    source: &Point,
) -> Result<Vec<Complex64>> {
    evaluators(array, params, modes)?.iter().map(|e| e.value(source).map(|u| u.conj())).collect()
}

/// Flat index of `T[n][i][j][k]`.
#[inline]
pub fn tensor_index(n_modes: usize, n: usize, i: usize, j: usize, k: usize) -> usize {
    ((n * n_modes + i) * n_modes + j) * n_modes + k
}

fn tensor_from_samples(inner: &Samples) -> Vec<Complex64> {
    let nm = inner.values.len();
    let u = &inner.values;
    let w: Vec<f64> = inner.nodes.iter().map(|n| n.weight).collect();
    let blocks: Vec<Vec<Complex64>> = (0..nm)
        .into_par_iter()
        .map(|n| {
            let mut block = vec![ZERO; nm * nm * nm];
            for i in 0..nm {
                for j in i..nm {
                    for k in 0..nm {
                        let mut acc = ZERO;
                        for p in 0..w.len() {
                            acc += u[i][p] * u[j][p] * (u[k][p] * u[n][p]).conj() * w[p];
                        }
                        block[(i * nm + j) * nm + k] = acc;
                        block[(j * nm + i) * nm + k] = acc;
                    }
                }
            }
            block
        })
        .collect();
    blocks.concat()
}

/// `T[n][i][j][k] = ∫_D u_i u_j ū_k ū_n`, exactly symmetric in `(i, j)`.
pub fn cubic_tensor(
    array: &ResonatorArray,
    params: &WaveParams,
    modes: &[Eigenmode],
    quad: &QuadratureSpec,
) -> Result<Vec<Complex64>> {
    Ok(tensor_from_samples(&interior_samples(array, params, modes, &quad.counts)?))
}

/// Relative changes of the projected quantities when all node counts double.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub gram: f64,
    pub tensor: f64,
    pub mode_norms: f64,
}

impl ConvergenceReport {
    pub fn max(&self) -> f64 {
        self.gram.max(self.tensor).max(self.mode_norms)
    }
}

/// Largest entrywise relative change between two arrays.
fn max_rel_change(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm() / y.norm().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

/// Compares every quadrature output at `quad` and at `quad.refined()`.
pub fn quadrature_convergence(
    array: &ResonatorArray,
    params: &WaveParams,
    modes: &[Eigenmode],
    quad: &QuadratureSpec,
) -> Result<ConvergenceReport> {
    let evals = evaluators(array, params, modes)?;
    let compute = |q: &QuadratureSpec| -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<f64>)> {
        let inner = sample(&evals, interior_nodes(array, &q.counts));
        let outer = sample(&evals, exterior_nodes(array, &q.q, &q.counts)?);
        let g = gram_from_samples(&inner, &outer);
        let norms = inner.values.iter().map(|v| pair(&inner.nodes, v, v).re).collect();
        Ok((g.iter().copied().collect(), tensor_from_samples(&inner), norms))
    };
    let (g0, t0, n0) = compute(quad)?;
    let (g1, t1, n1) = compute(&quad.refined())?;
    let mode_norms = n0.iter().zip(&n1).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    Ok(ConvergenceReport { gram: max_rel_change(&g0, &g1), tensor: max_rel_change(&t0, &t1), mode_norms })
}

/// Everything the projected harmonic-balance systems need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalSystem {
    /// Content hash of the inputs this system was built from.
    pub key: String,
    pub array: ResonatorArray,
    pub params: WaveParams,
    pub quadrature: QuadratureSpec,
    pub modes: Vec<Eigenmode>,
    pub omegas: Vec<Complex64>,
    pub gram: Vec<Vec<Complex64>>,
    pub gram_inverse: Vec<Vec<Complex64>>,
    pub source_vec: Vec<Complex64>,
    pub cubic_tensor: Vec<Complex64>,
}

/// Inputs that determine a [`ModalSystem`]; hashed to form the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalInputs {
    pub array: ResonatorArray,
    pub params: WaveParams,
    pub m_max: usize,
    pub search: SearchSpec,
    pub quadrature: QuadratureSpec,
}

impl ModalInputs {
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&(env!("CARGO_PKG_VERSION"), self)).expect("inputs serialise");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn to_rows(m: &DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn from_rows(rows: &[Vec<Complex64>]) -> DMatrix<Complex64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

impl ModalSystem {
    /// Finds the resonances and eigenmodes and projects onto them.
    pub fn build(inputs: &ModalInputs) -> Result<Self> {
        let resonances = find_resonances(&inputs.array, &inputs.params, inputs.m_max, &inputs.search)?;
        Self::from_resonances(inputs, &resonances)
    }

    pub fn from_resonances(inputs: &ModalInputs, resonances: &[Resonance]) -> Result<Self> {
        let (array, params, quad) = (&inputs.array, &inputs.params, &inputs.quadrature);
        let modes: Vec<Eigenmode> = resonances
            .iter()
            .map(|r| extract_eigenmode_with(array, params, r, &quad.counts))
            .collect::<Result<_>>()?;
        Self::from_modes(inputs, modes)
    }

    pub fn from_modes(inputs: &ModalInputs, modes: Vec<Eigenmode>) -> Result<Self> {
        let (array, params, quad) = (&inputs.array, &inputs.params, &inputs.quadrature);
        quad.validate(array)?;
        let evals = evaluators(array, params, &modes)?;
        let inner = sample(&evals, interior_nodes(array, &quad.counts));
        let outer = sample(&evals, exterior_nodes(array, &quad.q, &quad.counts)?);
        let gram = gram_from_samples(&inner, &outer);
        check_positive_definite(&gram)?;
        let inverse = gram
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem("Gram matrix is not invertible".into()))?;
        let n = modes.len();
        let defect = (&gram * &inverse - DMatrix::<Complex64>::identity(n, n)).norm();
        if defect > 1e-8 {
            return Err(Error::SingularSystem(format!("gram * gram_inverse deviates from I by {defect:e}")));
        }
        let source_vec = evals.iter().map(|e| e.value(&array.source).map(|u| u.conj())).collect::<Result<_>>()?;
        let cubic_tensor = tensor_from_samples(&inner);
        Ok(ModalSystem {
            key: inputs.content_hash(),
            array: array.clone(),
            params: *params,
            quadrature: *quad,
            omegas: modes.iter().map(|m| m.resonance.omega).collect(),
            modes,
            gram: to_rows(&gram),
            gram_inverse: to_rows(&inverse),
            source_vec,
            cubic_tensor,
        })
    }

    pub fn n(&self) -> usize {
        self.omegas.len()
    }

    pub fn gram_matrix(&self) -> DMatrix<Complex64> {
        from_rows(&self.gram)
    }

    pub fn gram_inverse_matrix(&self) -> DMatrix<Complex64> {
        from_rows(&self.gram_inverse)
    }

    #[inline]
    pub fn t(&self, n: usize, i: usize, j: usize, k: usize) -> Complex64 {
        self.cubic_tensor[tensor_index(self.n(), n, i, j, k)]
    }

    /// `(Gᵀ v)_m = Σ_n G[n][m] v_n` with `G = γ⁻¹`.
    pub fn apply_gt(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        (0..n).map(|m| (0..n).fold(ZERO, |acc, k| acc + self.gram_inverse[k][m] * v[k])).collect()
    }

    /// Modal forcing `Gᵀ (δ_{x0}, u)_Q`.
    pub fn forcing(&self) -> Vec<Complex64> {
        self.apply_gt(&self.source_vec)
    }

    pub fn evaluators(&self) -> Result<Vec<FieldEvaluator>> {
        evaluators(&self.array, &self.params, &self.modes)
    }

    pub fn interior_samples(&self) -> Result<Samples> {
        interior_samples(&self.array, &self.params, &self.modes, &self.quadrature.counts)
    }

    /// Mode values `u_n(x)` at a point off the circles.
    pub fn mode_values(&self, x: &Point) -> Result<Vec<Complex64>> {
        self.evaluators()?.iter().map(|e| e.value(x)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Loads `<dir>/<key>.json` when present and matching, otherwise builds and stores it.
    pub fn cached(inputs: &ModalInputs, dir: Option<&Path>) -> Result<(Self, bool)> {
        let key = inputs.content_hash();
        if let Some(dir) = dir {
            let path = dir.join(format!("{key}.json"));
            if let Ok(sys) = Self::load(&path) {
                if sys.key == key {
                    return Ok((sys, true));
                }
            }
            let sys = Self::build(inputs)?;
            std::fs::create_dir_all(dir)?;
            sys.save(&path)?;
            return Ok((sys, false));
        }
        Ok((Self::build(inputs)?, false))
    }
}
