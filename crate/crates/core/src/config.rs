//! Experiment configuration: strict JSON with defaults for the numerics block.
//!
//! Every block rejects unknown keys. Validation errors are prefixed with the
//! dotted path of the offending field, e.g. `material.delta: delta must be
//! positive (got 0)`.

use serde::{Deserialize, Serialize};

use crate::boundary::WaveParams;
use crate::error::{Error, Result};
use crate::geometry::{build_graded_array, Point, ResonatorArray};
use crate::modal::{QuadratureSpec, DEFAULT_Q_INFLATION};
use crate::quadrature::QuadratureCounts;
use crate::spectral::SearchSpec;

pub const MAX_RESONATORS: usize = 64;
pub const MAX_MULTIPOLE_ORDER: usize = 40;
pub const MAX_GRID_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n: usize,
    pub first_radius: f64,
    pub s: f64,
    pub gap_ratio: f64,
    pub source_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub v: f64,
    pub v_b: f64,
    pub delta: f64,
    pub beta: f64,
    /// Optional; must equal `v_b / v` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Highest Fourier order of the boundary densities.
    #[serde(rename = "M")]
    pub m: usize,
    pub quadrature: QuadratureCounts,
    /// Q is the bounding box of the array and source, grown by this fraction of its diagonal.
    pub q_inflation: f64,
    pub search: SearchSpec,
    /// Warm-start sweep points from their neighbours.
    pub warm_start: bool,
    /// Probe for coexisting solution branches at each sweep point.
    pub branch_check: bool,
    /// Report quadrature self-convergence and Q sensitivity in the manifest.
    pub self_check: bool,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            m: 5,
            quadrature: QuadratureCounts::default(),
            q_inflation: DEFAULT_Q_INFLATION,
            search: SearchSpec::default(),
            warm_start: true,
            branch_check: true,
            self_check: true,
        }
    }
}

/// Frequency grid. Omitted bounds are derived from the resonances at run time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Uniformly spaced points on `[min, max]`.
    pub points: usize,
    /// Extra points clustered around each `Re ω_n`.
    pub resonance_points: usize,
    /// Half-width of each cluster in multiples of `|Im ω_n|`.
    pub resonance_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { min: None, max: None, points: 400, resonance_points: 41, resonance_width: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Experiment {
    Resonances {},
    Sweep {
        #[serde(default)]
        grid: GridSpec,
        #[serde(default = "default_sweep_forcing")]
        forcing: Vec<f64>,
    },
    Phase {
        #[serde(default)]
        grid: GridSpec,
        #[serde(default = "default_phase_forcing")]
        forcing: f64,
        /// Defaults to the resonator centres on the membrane line.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observation_points: Option<Vec<[f64; 2]>>,
    },
    Twotone {
        /// One-based mode whose amplitudes are reported.
        #[serde(default = "default_twotone_mode")]
        mode: usize,
        /// Defaults to `|ω_mode|`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega1: Option<f64>,
        #[serde(default)]
        grid: GridSpec,
        #[serde(default = "default_twotone_forcing")]
        f1: f64,
        #[serde(default = "default_twotone_forcing")]
        f2: f64,
        /// Relative distance from `Ω₁` inside which `Ω₂` points are dropped.
        #[serde(default = "default_collision_floor")]
        collision_floor: f64,
    },
    Oracle {
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        omega0: f64,
        /// Forcing frequency; defaults to `omega0`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        #[serde(default = "default_oracle_forcing")]
        forcing: Vec<f64>,
    },
}

fn default_sweep_forcing() -> Vec<f64> {
    vec![1e-6, 1e-4, 1e-2]
}
fn default_phase_forcing() -> f64 {
    1e-6
}
fn default_twotone_mode() -> usize {
    4
}
fn default_twotone_forcing() -> f64 {
    1e-5
}
fn default_collision_floor() -> f64 {
    crate::hopf::DEFAULT_COLLISION_FLOOR
}
fn one() -> f64 {
    1.0
}
fn default_oracle_forcing() -> Vec<f64> {
    (0..=12).map(|k| 10f64.powf(-8.0 + 0.5 * k as f64)).collect()
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Resonances {} => "resonances",
            Experiment::Sweep { .. } => "sweep",
            Experiment::Phase { .. } => "phase",
            Experiment::Twotone { .. } => "twotone",
            Experiment::Oracle { .. } => "oracle",
        }
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("{name} must be positive (got {v})")))
    }
}

fn within(field: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v > lo && v <= hi {
        Ok(())
    } else {
        Err(bad(field, format!("must lie in ({lo}, {hi}] (got {v})")))
    }
}

/// Parses and validates a config; see the module docs for the error format.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.n == 0 || g.n > MAX_RESONATORS {
            return Err(bad("geometry.n", format!("must be between 1 and {MAX_RESONATORS} (got {})", g.n)));
        }
        within("geometry.first_radius", g.first_radius, 0.0, 1e6)?;
        within("geometry.s", g.s, 0.0, 10.0)?;
        within("geometry.gap_ratio", g.gap_ratio, 0.0, 100.0)?;
        if !(g.source_x < 0.0 && g.source_x.is_finite()) {
            return Err(bad("geometry.source_x", format!("must be negative and finite (got {})", g.source_x)));
        }

        let m = &self.material;
        positive("material.v", "v", m.v)?;
        positive("material.v_b", "v_b", m.v_b)?;
        positive("material.delta", "delta", m.delta)?;
        if m.delta >= 1.0 {
            return Err(bad("material.delta", format!("delta must be below 1 for high contrast (got {})", m.delta)));
        }
        if !m.beta.is_finite() {
            return Err(bad("material.beta", format!("beta must be finite (got {})", m.beta)));
        }
        if let Some(tau) = m.tau {
            let expected = m.v_b / m.v;
            if (tau - expected).abs() > 4.0 * f64::EPSILON * expected {
                return Err(bad("material.tau", format!("tau = {tau} is inconsistent with v_b / v = {expected}")));
            }
        }

        let n = &self.numerics;
        if n.m == 0 || n.m > MAX_MULTIPOLE_ORDER {
            return Err(bad("numerics.M", format!("must be between 1 and {MAX_MULTIPOLE_ORDER} (got {})", n.m)));
        }
        n.quadrature.validate().map_err(|e| bad("numerics.quadrature", e))?;
        within("numerics.q_inflation", n.q_inflation, 0.0, 10.0)?;
        n.search.validate().map_err(|e| bad("numerics.search", e))?;
        within("numerics.search.tolerance", n.search.tolerance, 0.0, 1e-2)?;
        if n.search.scan_order > n.m {
            return Err(bad("numerics.search.scan_order", format!("must not exceed M = {} (got {})", n.m, n.search.scan_order)));
        }

        match &self.experiment {
            Experiment::Resonances {} => {}
            Experiment::Sweep { grid, forcing } => {
                check_grid("experiment.grid", grid)?;
                if forcing.is_empty() {
                    return Err(bad("experiment.forcing", "needs at least one value"));
                }
                for f in forcing {
                    positive("experiment.forcing", "every forcing amplitude", *f)?;
                }
            }
            Experiment::Phase { grid, forcing, observation_points } => {
                check_grid("experiment.grid", grid)?;
                positive("experiment.forcing", "forcing", *forcing)?;
                if let Some(pts) = observation_points {
                    if pts.is_empty() {
                        return Err(bad("experiment.observation_points", "needs at least one point"));
                    }
                    if pts.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(bad("experiment.observation_points", "coordinates must be finite"));
                    }
                }
            }
            Experiment::Twotone { mode, omega1, grid, f1, f2, collision_floor } => {
                if *mode == 0 || *mode > g.n {
                    return Err(bad("experiment.mode", format!("must be between 1 and n = {} (got {mode})", g.n)));
                }
                if let Some(w) = omega1 {
                    positive("experiment.omega1", "omega1", *w)?;
                }
                check_grid("experiment.grid", grid)?;
                positive("experiment.f1", "f1", *f1)?;
                if !(*f2 >= 0.0 && f2.is_finite()) {
                    return Err(bad("experiment.f2", format!("must be non-negative (got {f2})")));
                }
                within("experiment.collision_floor", *collision_floor, 0.0, 0.5)?;
            }
            Experiment::Oracle { mu, omega0, omega, forcing } => {
                if !mu.is_finite() {
                    return Err(bad("experiment.mu", format!("must be finite (got {mu})")));
                }
                positive("experiment.omega0", "omega0", *omega0)?;
                if let Some(w) = omega {
                    positive("experiment.omega", "omega", *w)?;
                }
                if forcing.is_empty() {
                    return Err(bad("experiment.forcing", "needs at least one value"));
                }
                for f in forcing {
                    if !(*f >= 0.0 && f.is_finite()) {
                        return Err(bad("experiment.forcing", format!("amplitudes must be non-negative (got {f})")));
                    }
                }
            }
        }

        // Constructing the array checks the remaining cross-field constraints.
        self.array().map_err(|e| bad("geometry", e))?;
        Ok(())
    }

    pub fn array(&self) -> Result<ResonatorArray> {
        let g = &self.geometry;
        build_graded_array(g.n, g.first_radius, g.s, g.gap_ratio, g.source_x)
    }

    pub fn params(&self) -> Result<WaveParams> {
        WaveParams::new(self.material.v, self.material.v_b, self.material.delta)
    }

    pub fn quadrature(&self, array: &ResonatorArray) -> Result<QuadratureSpec> {
        QuadratureSpec::for_array(array, self.numerics.q_inflation, self.numerics.quadrature)
    }

    /// Observation points for a phase experiment.
    pub fn observation_points(&self, array: &ResonatorArray) -> Vec<Point> {
        match &self.experiment {
            Experiment::Phase { observation_points: Some(pts), .. } => {
                pts.iter().map(|p| Point::new(p[0], p[1])).collect()
            }
            _ => array.resonators.iter().map(|r| Point::new(r.center.x, 0.0)).collect(),
        }
    }
}

fn check_grid(field: &str, g: &GridSpec) -> Result<()> {
    if g.points < 2 || g.points > MAX_GRID_POINTS {
        return Err(bad(&format!("{field}.points"), format!("must be between 2 and {MAX_GRID_POINTS} (got {})", g.points)));
    }
    if g.resonance_points > MAX_GRID_POINTS {
        return Err(bad(&format!("{field}.resonance_points"), format!("must not exceed {MAX_GRID_POINTS}")));
    }
    positive(&format!("{field}.resonance_width"), "resonance_width", g.resonance_width)?;
    if let Some(lo) = g.min {
        positive(&format!("{field}.min"), "min", lo)?;
    }
    if let Some(hi) = g.max {
        positive(&format!("{field}.max"), "max", hi)?;
    }
    if let (Some(lo), Some(hi)) = (g.min, g.max) {
        if hi <= lo {
            return Err(bad(&format!("{field}.max"), format!("must exceed min = {lo} (got {hi})")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "geometry": {"n": 6, "first_radius": 1.0, "s": 1.05, "gap_ratio": 0.5, "source_x": -5.0},
        "material": {"v": 1.0, "v_b": 1.0, "delta": 0.001, "beta": 1.0},
        "experiment": {"type": "resonances"}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.numerics.m, 5);
        assert_eq!(cfg.numerics.search.tolerance, 1e-10);
        assert_eq!(cfg.numerics.q_inflation, 0.5);
    }

    #[test]
    fn zero_delta_is_rejected() {
        let text = MINIMAL.replace("\"delta\": 0.001", "\"delta\": 0");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("delta must be positive"), "{err}");
        assert!(err.contains("material.delta"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"beta\"", "\"betaa\"");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("betaa"), "{err}");
    }

    #[test]
    fn unknown_experiment_key_is_named() {
        let text = MINIMAL.replace(r#"{"type": "resonances"}"#, r#"{"type": "sweep", "forcng": [1e-6]}"#);
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("forcng"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_config("{\n  \"geometry\": ,\n}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn tau_mismatch_is_rejected() {
        let text = MINIMAL.replace("\"beta\": 1.0", "\"beta\": 1.0, \"tau\": 2.0");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("material.tau"), "{err}");
        let ok = MINIMAL.replace("\"beta\": 1.0", "\"beta\": 1.0, \"tau\": 1.0");
        assert!(parse_config(&ok).is_ok());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn twotone_mode_bound_names_field() {
        let text = MINIMAL.replace(r#"{"type": "resonances"}"#, r#"{"type": "twotone", "mode": 7}"#);
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("experiment.mode"), "{err}");
    }
}
