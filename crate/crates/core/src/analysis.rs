//! Frequency sweeps, phase and group delay, and two-tone interference data.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::hopf::{probe_other_branches, solve_passive, solve_pure_tone, solve_two_tone_with, PureToneSolution, TwoToneSolution};
use crate::modal::ModalSystem;

/// Warm-start chains cover contiguous blocks of this many grid points, so the
/// result does not depend on the number of worker threads.
pub const CHAIN_LENGTH: usize = 16;

/// Outcome at one grid point: a solution, a flag, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint<T> {
    pub solution: Option<T>,
    pub flag: Option<String>,
}

impl<T> SweepPoint<T> {
    pub fn is_flagged(&self) -> bool {
        self.flag.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub system_key: String,
    pub forcing: Vec<f64>,
    pub beta: f64,
    pub flagged_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T> {
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint<T>>,
    pub metadata: SweepMetadata,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("frequency grid is empty".into()));
    }
    if grid.iter().any(|w| !w.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("frequency grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Options for [`pure_tone_sweep_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Warm-start each point from its left neighbour within a chain.
    pub warm_start: bool,
    /// Probe for other solution branches with perturbed Newton starts.
    pub branch_check: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { warm_start: true, branch_check: true }
    }
}

pub fn pure_tone_sweep(system: &ModalSystem, grid: &[f64], f: f64, beta: f64) -> Result<SweepResult<PureToneSolution>> {
    pure_tone_sweep_with(system, grid, f, beta, &SweepOptions::default())
}

pub fn pure_tone_sweep_with(
    system: &ModalSystem,
    grid: &[f64],
    f: f64,
    beta: f64,
    opts: &SweepOptions,
) -> Result<SweepResult<PureToneSolution>> {
    check_grid(grid)?;
    let chains: Vec<Vec<SweepPoint<PureToneSolution>>> = grid
        .par_chunks(CHAIN_LENGTH)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len());
            let mut prev: Option<Vec<Complex64>> = None;
            for &omega in chunk {
                let start = if opts.warm_start { prev.as_deref() } else { None };
                let point = match solve_pure_tone(system, omega, f, beta, start) {
                    Ok(sol) => {
                        let flag = if opts.branch_check && beta != 0.0 {
                            probe_other_branches(system, &sol).map(|gap| format!("multiple_branches(gap={gap:.3e})"))
                        } else {
                            None
                        };
                        prev = Some(sol.x.clone());
                        SweepPoint { solution: Some(sol), flag }
                    }
                    Err(e) => {
                        prev = None;
                        SweepPoint { solution: None, flag: Some(flag_text(&e)) }
                    }
                };
                out.push(point);
            }
            out
        })
        .collect();
    let points: Vec<_> = chains.into_iter().flatten().collect();
    let flagged_points = points.iter().filter(|p| p.is_flagged()).count();
    Ok(SweepResult {
        grid: grid.to_vec(),
        points,
        metadata: SweepMetadata { system_key: system.key.clone(), forcing: vec![f], beta, flagged_points },
    })
}

fn flag_text(e: &Error) -> String {
    match e {
        Error::NoConvergence { .. } => format!("no_convergence: {e}"),
        Error::Divergence { .. } => format!("divergence: {e}"),
        _ => format!("failed: {e}"),
    }
}

/// Phase and amplitude of the response at one observation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurve {
    pub x: Point,
    pub grid: Vec<f64>,
    pub r: Vec<f64>,
    /// Unwrapped phase in radians (sign-normalised, see [`PhaseResponse`]).
    pub phi: Vec<f64>,
    pub phase_delay_cycles: Vec<f64>,
    pub group_delay_cycles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResponse {
    pub curves: Vec<PhaseCurve>,
    /// True when all phases were negated so that the low-frequency phase delay is negative.
    pub sign_flipped: bool,
    /// Low-frequency phase delay (cycles) before any sign normalisation, per curve.
    pub raw_low_frequency_cycles: Vec<f64>,
    /// Grid points where the solver failed or flagged.
    pub flagged: Vec<(f64, String)>,
    pub refinement_levels: usize,
}

/// Largest accepted wrapped phase increment between neighbouring grid points.
const MAX_PHASE_STEP: f64 = 0.5 * PI;
const MAX_REFINEMENT_LEVELS: usize = 30;

fn wrap(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Unwraps a phase sequence so that every increment lies in `(−π, π]`.
pub fn unwrap_phase(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    for (k, &p) in raw.iter().enumerate() {
        if k == 0 {
            out.push(p);
        } else {
            let prev = out[k - 1];
            out.push(prev + wrap(p - prev));
        }
    }
    out
}

/// Group delay in cycles, `(dφ/dΩ) Ω / (2π)`, by central differences
/// (one-sided at the ends).
pub fn group_delay(curve: &PhaseCurve) -> Vec<f64> {
    group_delay_of(&curve.grid, &curve.phi)
}

fn group_delay_of(grid: &[f64], phi: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = if k == 0 { (0, 1) } else if k == n - 1 { (n - 2, n - 1) } else { (k - 1, k + 1) };
            (phi[b] - phi[a]) / (grid[b] - grid[a]) * grid[k] / (2.0 * PI)
        })
        .collect()
}

/// Phase response at the observation points, refining the grid adaptively
/// wherever a phase increment would be ambiguous.
pub fn phase_response(
    system: &ModalSystem,
    grid: &[f64],
    f: f64,
    beta: f64,
    x_points: &[Point],
) -> Result<PhaseResponse> {
    check_grid(grid)?;
    let evals = system.evaluators()?;
    let modes: Vec<Vec<Complex64>> = x_points
        .iter()
        .map(|x| evals.iter().map(|e| e.value(x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let solve = |omegas: &[f64]| -> Vec<std::result::Result<Vec<Complex64>, String>> {
        omegas
            .par_iter()
            .map(|&w| solve_pure_tone(system, w, f, beta, None).map(|s| s.x).map_err(|e| flag_text(&e)))
            .collect()
    };
    let mut omegas = grid.to_vec();
    let mut sols = solve(&omegas);
    let mut levels = 0;
    let pressure = |x: &[Complex64], u: &[Complex64]| x.iter().zip(u).fold(Complex64::new(0.0, 0.0), |a, (x, u)| a + x * u);
    loop {
        let mut inserts = Vec::new();
        for k in 0..omegas.len() - 1 {
            let (Ok(a), Ok(b)) = (&sols[k], &sols[k + 1]) else { continue };
            let ambiguous = modes.iter().any(|u| wrap(pressure(b, u).arg() - pressure(a, u).arg()).abs() > MAX_PHASE_STEP);
            if ambiguous {
                inserts.push(k);
            }
        }
        if inserts.is_empty() {
            break;
        }
        if levels == MAX_REFINEMENT_LEVELS {
            let k = inserts[0];
            return Err(Error::Unwrap {
                lo: omegas[k],
                hi: omegas[k + 1],
                suggestion: "add grid points between these frequencies or lower F".into(),
            });
        }
        levels += 1;
        let mids: Vec<f64> = inserts.iter().map(|&k| 0.5 * (omegas[k] + omegas[k + 1])).collect();
        let new_sols = solve(&mids);
        let mut merged_w = Vec::with_capacity(omegas.len() + mids.len());
        let mut merged_s = Vec::with_capacity(omegas.len() + mids.len());
        let mut it = inserts.iter().zip(mids.iter().zip(new_sols)).peekable();
        for (k, (w, s)) in omegas.into_iter().zip(sols).enumerate() {
            merged_w.push(w);
            merged_s.push(s);
            if let Some((&ik, _)) = it.peek() {
                if ik == k {
                    let (_, (mw, ms)) = it.next().expect("peeked");
                    merged_w.push(*mw);
                    merged_s.push(ms);
                }
            }
        }
        omegas = merged_w;
        sols = merged_s;
    }
    let flagged: Vec<(f64, String)> = omegas
        .iter()
        .zip(&sols)
        .filter_map(|(w, s)| s.as_ref().err().map(|e| (*w, e.clone())))
        .collect();
    let good: Vec<(f64, &Vec<Complex64>)> =
        omegas.iter().zip(&sols).filter_map(|(w, s)| s.as_ref().ok().map(|x| (*w, x))).collect();
    if good.is_empty() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let grid_ok: Vec<f64> = good.iter().map(|g| g.0).collect();
    let mut curves = Vec::with_capacity(x_points.len());
    let mut raw_low = Vec::with_capacity(x_points.len());
    for (x, u) in x_points.iter().zip(&modes) {
        let p: Vec<Complex64> = good.iter().map(|(_, xs)| pressure(xs, u)).collect();
        let phi = unwrap_phase(&p.iter().map(|z| z.arg()).collect::<Vec<_>>());
        raw_low.push(phi[0] / (2.0 * PI));
        curves.push(PhaseCurve {
            x: *x,
            grid: grid_ok.clone(),
            r: p.iter().map(|z| z.norm()).collect(),
            phi,
            phase_delay_cycles: Vec::new(),
            group_delay_cycles: Vec::new(),
        });
    }
    let mean_low = raw_low.iter().sum::<f64>() / raw_low.len().max(1) as f64;
    let sign_flipped = mean_low > 0.0;
    for c in &mut curves {
        if sign_flipped {
            c.phi.iter_mut().for_each(|p| *p = -*p);
        }
        c.phase_delay_cycles = c.phi.iter().map(|p| p / (2.0 * PI)).collect();
        c.group_delay_cycles = group_delay_of(&c.grid, &c.phi);
    }
    Ok(PhaseResponse { curves, sign_flipped, raw_low_frequency_cycles: raw_low, flagged, refinement_levels: levels })
}

/// Per-point record of a two-tone sweep for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTonePoint {
    pub solution: TwoToneSolution,
    pub abs_x10: f64,
    pub abs_x01: f64,
    pub abs_x21: f64,
    pub abs_x12: f64,
    pub abs_x01_passive: f64,
}

pub fn two_tone_sweep(
    system: &ModalSystem,
    omega1: f64,
    grid2: &[f64],
    f1: f64,
    f2: f64,
    beta: f64,
    mode_index: usize,
) -> Result<SweepResult<TwoTonePoint>> {
    two_tone_sweep_with(system, omega1, grid2, f1, f2, beta, mode_index, crate::hopf::DEFAULT_COLLISION_FLOOR)
}

#[allow(clippy::too_many_arguments)]
pub fn two_tone_sweep_with(
    system: &ModalSystem,
    omega1: f64,
    grid2: &[f64],
    f1: f64,
    f2: f64,
    beta: f64,
    mode_index: usize,
    collision_floor: f64,
) -> Result<SweepResult<TwoTonePoint>> {
    check_grid(grid2)?;
    if mode_index >= system.n() {
        return Err(Error::InvalidParameter(format!("mode index {mode_index} out of range")));
    }
    let m = mode_index;
    let points: Vec<SweepPoint<TwoTonePoint>> = grid2
        .par_iter()
        .map(|&omega2| {
            let passive = solve_passive(system, omega2, f2).map(|x| x[m].norm());
            match (solve_two_tone_with(system, omega1, omega2, f1, f2, beta, collision_floor), passive) {
                (Ok(sol), Ok(p)) => SweepPoint {
                    solution: Some(TwoTonePoint {
                        abs_x10: sol.x10[m].norm(),
                        abs_x01: sol.x01[m].norm(),
                        abs_x21: sol.x21[m].norm(),
                        abs_x12: sol.x12[m].norm(),
                        abs_x01_passive: p,
                        solution: sol,
                    }),
                    flag: None,
                },
                (Err(e), _) | (_, Err(e)) => SweepPoint { solution: None, flag: Some(flag_text(&e)) },
            }
        })
        .collect();
    let flagged_points = points.iter().filter(|p| p.is_flagged()).count();
    Ok(SweepResult {
        grid: grid2.to_vec(),
        points,
        metadata: SweepMetadata { system_key: system.key.clone(), forcing: vec![f1, f2], beta, flagged_points },
    })
}

/// Uniform grid on `[lo, hi]` with extra points clustered around each `Re ω_n`
/// (within `width` multiples of `|Im ω_n|`), sorted and deduplicated.
pub fn resonance_refined_grid(lo: f64, hi: f64, points: usize, omegas: &[Complex64], per_resonance: usize, width: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points.max(2) - 1) as f64).collect();
    for w in omegas {
        let half = width * w.im.abs();
        for k in 0..per_resonance {
            let t = -1.0 + 2.0 * k as f64 / (per_resonance.max(2) - 1) as f64;
            let v = w.re + half * t;
            if v > lo && v < hi {
                g.push(v);
            }
        }
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    g
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Mean phase delay (cycles) of each curve over the top `fraction` of its grid.
pub fn plateau_means(curves: &[PhaseCurve], fraction: f64) -> Vec<f64> {
    curves
        .iter()
        .map(|c| {
            let hi = *c.grid.last().expect("non-empty grid");
            let lo = hi - fraction * (hi - c.grid[0]);
            let sel: Vec<f64> =
                c.grid.iter().zip(&c.phase_delay_cycles).filter(|(w, _)| **w >= lo).map(|(_, p)| *p).collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        })
        .collect()
}
