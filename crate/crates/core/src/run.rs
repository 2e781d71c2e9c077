//! Experiment orchestration: builds (or loads) the modal system, runs the
//! configured experiment and writes CSV files plus a `run.json` manifest.
//!
//! All numbers are written in shortest round-trip form, so identical inputs
//! give byte-identical CSV files regardless of thread count or cache state.
//! Files are written once, from this thread, after all computation finishes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    phase_response, pure_tone_sweep_with, resonance_refined_grid, two_tone_sweep_with, SweepOptions,
};
use crate::config::{Experiment, ExperimentConfig, GridSpec};
use crate::error::{Error, Result};
use crate::hopf::{single_hopf_steady_state, solve_pure_tone};
use crate::modal::{quadrature_convergence, ModalInputs, ModalSystem, QuadratureSpec};
use crate::spectral::{find_resonances, Resonance};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Inflation used for the Q-sensitivity check.
pub const Q_CHECK_INFLATION: f64 = 0.75;
/// Largest relative response change tolerated by the Q-sensitivity check.
pub const Q_CHECK_LIMIT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory of cached modal systems; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub flagged_points: usize,
    pub cache_hit: bool,
    pub warnings: Vec<String>,
}

impl RunSummary {
    /// 0 when clean, 2 when some sweep points were flagged.
    pub fn exit_code(&self) -> i32 {
        if self.flagged_points > 0 {
            2
        } else {
            0
        }
    }
}

/// Shortest round-trip decimal; `NaN` for missing values.
pub fn fmt_f64(v: f64) -> String {
    ryu::Buffer::new().format(v).to_owned()
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
    hashes: serde_json::Map<String, Value>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, csv: Csv) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, csv.text.as_bytes())?;
        self.hashes.insert(name.to_owned(), Value::String(sha256_hex(csv.text.as_bytes())));
        self.files.push(path);
        Ok(())
    }
}

fn resonances_csv(resonances: &[Resonance]) -> Csv {
    let mut csv = Csv::new(&["n", "re_omega", "im_omega", "residual"]);
    for (k, r) in resonances.iter().enumerate() {
        csv.row(&[(k + 1).to_string(), fmt_f64(r.omega.re), fmt_f64(r.omega.im), fmt_f64(r.residual)]);
    }
    csv
}

fn resonance_json(resonances: &[Resonance]) -> Value {
    resonances
        .iter()
        .map(|r| {
            json!({
                "re_omega": r.omega.re,
                "im_omega": r.omega.im,
                "residual": r.residual,
                "refinement_drift": r.refinement_drift,
            })
        })
        .collect()
}

/// Expands a grid spec, filling omitted bounds from `(lo, hi)`.
fn expand_grid(spec: &GridSpec, lo: f64, hi: f64, omegas: &[Complex64]) -> Result<Vec<f64>> {
    let (lo, hi) = (spec.min.unwrap_or(lo), spec.max.unwrap_or(hi));
    if !(hi > lo && lo > 0.0) {
        return Err(Error::Config(format!("experiment.grid: empty frequency range [{lo}, {hi}]")));
    }
    Ok(resonance_refined_grid(lo, hi, spec.points, omegas, spec.resonance_points, spec.resonance_width))
}

fn default_band(omegas: &[Complex64]) -> (f64, f64) {
    let lo = omegas.iter().map(|w| w.re).fold(f64::INFINITY, f64::min);
    let hi = omegas.iter().map(|w| w.re).fold(0.0, f64::max);
    (0.25 * lo, 1.25 * hi)
}

#[derive(Default)]
struct SolverStats {
    points: usize,
    flagged: Vec<Value>,
    newton_total: usize,
    newton_max: usize,
    continuation_total: usize,
    max_residual: f64,
}

impl SolverStats {
    fn record(&mut self, iters: usize, continuation: usize, residual: f64) {
        self.newton_total += iters;
        self.newton_max = self.newton_max.max(iters);
        self.continuation_total += continuation;
        self.max_residual = self.max_residual.max(residual);
    }

    fn json(&self) -> Value {
        json!({
            "points": self.points,
            "flagged_points": self.flagged.len(),
            "flags": self.flagged,
            "newton_iterations_total": self.newton_total,
            "newton_iterations_max": self.newton_max,
            "continuation_steps_total": self.continuation_total,
            "max_residual": self.max_residual,
        })
    }
}

/// Relative change of the pure-tone response at each `Re ω_n` when Q grows.
fn q_sensitivity(system: &ModalSystem, inputs: &ModalInputs, f: f64, beta: f64) -> Result<Value> {
    let quadrature = QuadratureSpec::for_array(&inputs.array, Q_CHECK_INFLATION, inputs.quadrature.counts)?;
    let wide = ModalSystem::from_modes(&ModalInputs { quadrature, ..inputs.clone() }, system.modes.clone())?;
    let changes: Vec<f64> = system
        .omegas
        .par_iter()
        .map(|w| -> Result<f64> {
            let a = solve_pure_tone(system, w.re, f, beta, None)?.x;
            let b = solve_pure_tone(&wide, w.re, f, beta, None)?.x;
            let num: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum();
            let den: f64 = a.iter().map(|p| p.norm_sqr()).sum();
            Ok((num / den).sqrt())
        })
        .collect::<Result<_>>()?;
    let worst = changes.iter().copied().fold(0.0, f64::max);
    Ok(json!({
        "inflation": Q_CHECK_INFLATION,
        "forcing": f,
        "relative_change_at_resonances": changes,
        "max_relative_change": worst,
        "within_limit": worst < Q_CHECK_LIMIT,
        "limit": Q_CHECK_LIMIT,
    }))
}

fn self_check(system: &ModalSystem, inputs: &ModalInputs, f: f64, beta: f64, warnings: &mut Vec<String>) -> Result<Value> {
    let conv = quadrature_convergence(&inputs.array, &inputs.params, &system.modes, &inputs.quadrature)?;
    if conv.max() > 1e-6 {
        warnings.push(format!("quadrature self-convergence {:.3e} exceeds 1e-6", conv.max()));
    }
    let gram = system.gram_matrix();
    let hermitian = (&gram - gram.adjoint()).norm() / gram.norm();
    let min_eig = gram.clone().symmetric_eigenvalues().min();
    let q = q_sensitivity(system, inputs, f, beta)?;
    if q["within_limit"] == Value::Bool(false) {
        warnings.push(format!(
            "responses change by {:.3e} (relative) when Q is inflated by {Q_CHECK_INFLATION}",
            q["max_relative_change"].as_f64().unwrap_or(f64::NAN)
        ));
    }
    Ok(json!({
        "quadrature_convergence": conv,
        "gram_hermitian_defect": hermitian,
        "gram_min_eigenvalue": min_eig,
        "q_sensitivity": q,
    }))
}

fn forcing_scale(exp: &Experiment) -> f64 {
    match exp {
        Experiment::Sweep { forcing, .. } => forcing[0],
        Experiment::Phase { forcing, .. } => *forcing,
        Experiment::Twotone { f1, .. } => *f1,
        _ => 1e-6,
    }
}

/// Runs the configured experiment and writes its outputs into `opts.out_dir`.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(&opts.out_dir)?;
    let mut out = Writer { dir: &opts.out_dir, files: Vec::new(), hashes: serde_json::Map::new() };
    let mut warnings = Vec::new();
    let mut stats = SolverStats::default();
    let mut times = serde_json::Map::new();
    let mut extra = serde_json::Map::new();
    let mut cache_hit = false;
    let beta = config.material.beta;

    if let Experiment::Oracle { mu, omega0, omega, forcing } = &config.experiment {
        let omega = omega.unwrap_or(*omega0);
        let t = Instant::now();
        let results: Vec<_> = forcing
            .par_iter()
            .map(|&f| single_hopf_steady_state(*mu, *omega0, omega, f))
            .collect::<Result<_>>()?;
        times.insert("experiment".into(), json!(t.elapsed().as_secs_f64()));
        let mut csv = Csv::new(&["mu", "omega0", "Omega", "F", "amplitude", "drift", "t_final"]);
        for r in &results {
            stats.points += 1;
            csv.row(&[r.mu, r.omega0, r.omega, r.f, r.steady_amplitude, r.drift, r.t_final].map(fmt_f64));
        }
        out.write("oracle.csv", csv)?;
    } else {
        let array = config.array()?;
        let params = config.params()?;
        let inputs = ModalInputs {
            quadrature: config.quadrature(&array)?,
            array,
            params,
            m_max: config.numerics.m,
            search: config.numerics.search,
        };
        let t = Instant::now();
        if let Experiment::Resonances {} = config.experiment {
            let resonances = find_resonances(&inputs.array, &inputs.params, inputs.m_max, &inputs.search)?;
            times.insert("resonance_search".into(), json!(t.elapsed().as_secs_f64()));
            out.write("resonances.csv", resonances_csv(&resonances))?;
            extra.insert("resonances".into(), resonance_json(&resonances));
        } else {
            let (system, hit) = ModalSystem::cached(&inputs, opts.cache_dir.as_deref())?;
            cache_hit = hit;
            times.insert("modal_system".into(), json!(t.elapsed().as_secs_f64()));
            extra.insert("modal_system_key".into(), json!(system.key));
            let resonances: Vec<Resonance> = system.modes.iter().map(|m| m.resonance).collect();
            out.write("resonances.csv", resonances_csv(&resonances))?;
            extra.insert("resonances".into(), resonance_json(&resonances));

            if config.numerics.self_check {
                let t = Instant::now();
                let check = self_check(&system, &inputs, forcing_scale(&config.experiment), beta, &mut warnings)?;
                times.insert("self_check".into(), json!(t.elapsed().as_secs_f64()));
                extra.insert("self_check".into(), check);
            }

            let t = Instant::now();
            run_modal_experiment(config, &system, &mut out, &mut stats, &mut extra)?;
            times.insert("experiment".into(), json!(t.elapsed().as_secs_f64()));
        }
    }
    times.insert("total".into(), json!(started.elapsed().as_secs_f64()));

    let config_text = serde_json::to_string(config)?;
    let manifest = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": VERSION },
        "experiment": config.experiment.name(),
        "config": config,
        "hashes": {
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "files_sha256": Value::Object(out.hashes.clone()),
        },
        "cache": { "enabled": opts.cache_dir.is_some(), "hit": cache_hit },
        "threads": opts.threads,
        "wall_times_s": Value::Object(times),
        "solver": stats.json(),
        "warnings": warnings,
        "details": Value::Object(extra),
    });
    let path = opts.out_dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    out.files.push(path);
    Ok(RunSummary { files: out.files, flagged_points: stats.flagged.len(), cache_hit, warnings })
}

fn run_modal_experiment(
    config: &ExperimentConfig,
    system: &ModalSystem,
    out: &mut Writer<'_>,
    stats: &mut SolverStats,
    extra: &mut serde_json::Map<String, Value>,
) -> Result<()> {
    let beta = config.material.beta;
    let opts = SweepOptions { warm_start: config.numerics.warm_start, branch_check: config.numerics.branch_check };
    let (lo, hi) = default_band(&system.omegas);
    let nan = fmt_f64(f64::NAN);
    match &config.experiment {
        Experiment::Sweep { grid, forcing } => {
            let grid = expand_grid(grid, lo, hi, &system.omegas)?;
            let mut csv = Csv::new(&["Omega", "F", "mode", "abs_X_over_F", "re_X", "im_X", "residual", "flag"]);
            for &f in forcing {
                let sweep = pure_tone_sweep_with(system, &grid, f, beta, &opts)?;
                for (omega, p) in sweep.grid.iter().zip(&sweep.points) {
                    stats.points += 1;
                    if let Some(reason) = &p.flag {
                        stats.flagged.push(json!({ "Omega": omega, "F": f, "reason": reason }));
                    }
                    let flag = if p.is_flagged() { "1" } else { "0" }.to_owned();
                    match &p.solution {
                        Some(sol) => {
                            stats.record(sol.newton_iters, sol.continuation_steps, sol.residual_norm);
                            for (m, x) in sol.x.iter().enumerate() {
                                csv.row(&[
                                    fmt_f64(*omega),
                                    fmt_f64(f),
                                    (m + 1).to_string(),
                                    fmt_f64(x.norm() / f),
                                    fmt_f64(x.re),
                                    fmt_f64(x.im),
                                    fmt_f64(sol.residual_norm),
                                    flag.clone(),
                                ]);
                            }
                        }
                        None => {
                            for m in 0..system.n() {
                                let mut row = vec![fmt_f64(*omega), fmt_f64(f), (m + 1).to_string()];
                                row.extend(std::iter::repeat_n(nan.clone(), 4));
                                row.push(flag.clone());
                                csv.row(&row);
                            }
                        }
                    }
                }
            }
            out.write("sweep.csv", csv)?;
        }
        Experiment::Phase { grid, forcing, .. } => {
            let grid = expand_grid(grid, lo, hi, &system.omegas)?;
            let points = config.observation_points(&system.array);
            let resp = phase_response(system, &grid, *forcing, beta, &points)?;
            let mut csv =
                Csv::new(&["x1", "x2", "Omega", "R", "phi", "phase_delay_cycles", "group_delay_cycles"]);
            for c in &resp.curves {
                for k in 0..c.grid.len() {
                    csv.row(&[
                        c.x.x,
                        c.x.y,
                        c.grid[k],
                        c.r[k],
                        c.phi[k],
                        c.phase_delay_cycles[k],
                        c.group_delay_cycles[k],
                    ]
                    .map(fmt_f64));
                }
            }
            stats.points += resp.curves.first().map_or(0, |c| c.grid.len()) + resp.flagged.len();
            for (omega, reason) in &resp.flagged {
                stats.flagged.push(json!({ "Omega": omega, "F": forcing, "reason": reason }));
            }
            out.write("phase.csv", csv)?;
            extra.insert(
                "phase".into(),
                json!({
                    "sign_flipped": resp.sign_flipped,
                    "raw_low_frequency_cycles": resp.raw_low_frequency_cycles,
                    "refinement_levels": resp.refinement_levels,
                    "grid_points": resp.curves.first().map_or(0, |c| c.grid.len()),
                }),
            );
            extra.insert("sign_flags".into(), json!({ "phase_sign_flipped": resp.sign_flipped }));
        }
        Experiment::Twotone { mode, omega1, grid, f1, f2, collision_floor } => {
            let m = mode - 1;
            let omega1 = omega1.unwrap_or(system.omegas[m].norm());
            let full = expand_grid(grid, 0.8 * omega1, 1.2 * omega1, &system.omegas)?;
            let grid2: Vec<f64> =
                full.into_iter().filter(|w| (w - omega1).abs() > collision_floor * w.max(omega1)).collect();
            let sweep = two_tone_sweep_with(system, omega1, &grid2, *f1, *f2, beta, m, *collision_floor)?;
            let mut csv = Csv::new(&[
                "Omega2",
                "abs_X10",
                "abs_X01",
                "abs_X21",
                "abs_X12",
                "abs_X01_passive",
                "residual",
                "flag",
            ]);
            for (omega2, p) in sweep.grid.iter().zip(&sweep.points) {
                stats.points += 1;
                if let Some(reason) = &p.flag {
                    stats.flagged.push(json!({ "Omega2": omega2, "reason": reason }));
                }
                let flag = if p.is_flagged() { "1" } else { "0" }.to_owned();
                let mut row = vec![fmt_f64(*omega2)];
                match &p.solution {
                    Some(s) => {
                        let sol = &s.solution;
                        stats.record(sol.newton_iters, sol.continuation_steps, sol.residual_norm);
                        row.extend(
                            [s.abs_x10, s.abs_x01, s.abs_x21, s.abs_x12, s.abs_x01_passive, sol.residual_norm]
                                .map(fmt_f64),
                        );
                    }
                    None => row.extend(std::iter::repeat_n(nan.clone(), 6)),
                }
                row.push(flag);
                csv.row(&row);
            }
            out.write("twotone.csv", csv)?;
            extra.insert("twotone".into(), json!({ "omega1": omega1, "mode": mode, "grid_points": grid2.len() }));
        }
        Experiment::Resonances {} | Experiment::Oracle { .. } => unreachable!("handled by run_experiment"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_shortest_round_trip() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-6), "1e-6");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        let v = 0.012345678901234567;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_rows_end_with_lf() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&["1".into(), "2".into()]);
        assert_eq!(csv.text, "a,b\n1,2\n");
    }
}
