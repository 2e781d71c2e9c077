//! Shared fixtures: the default six-resonator array and a mirrored pair.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use cochlea::boundary::WaveParams;
use cochlea::geometry::{build_graded_array, Point, ResonatorArray};
use cochlea::modal::{ModalInputs, ModalSystem, QuadratureSpec, DEFAULT_Q_INFLATION};
use cochlea::quadrature::QuadratureCounts;
use cochlea::spectral::SearchSpec;
use num_complex::Complex64;

pub const M: usize = 5;

pub fn default_array() -> ResonatorArray {
    build_graded_array(6, 1.0, 1.05, 0.5, -5.0).unwrap()
}

pub fn params(delta: f64) -> WaveParams {
    WaveParams::new(1.0, 1.0, delta).unwrap()
}

pub fn pair(source: Point) -> ResonatorArray {
    ResonatorArray::mirrored_pair(1.0, 0.5, source).unwrap()
}

pub fn inputs(array: ResonatorArray, delta: f64) -> ModalInputs {
    ModalInputs {
        quadrature: QuadratureSpec::for_array(&array, DEFAULT_Q_INFLATION, QuadratureCounts::default()).unwrap(),
        array,
        params: params(delta),
        m_max: M,
        search: SearchSpec::default(),
    }
}

/// Modal systems are cached under the cargo-provided scratch directory so
/// that separate test binaries share one build.
pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("modal-cache")
}

pub fn default_system() -> &'static ModalSystem {
    static SYSTEM: OnceLock<ModalSystem> = OnceLock::new();
    SYSTEM.get_or_init(|| ModalSystem::cached(&inputs(default_array(), 1e-3), Some(&cache_dir())).unwrap().0)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Numerical projection of `|a|² a` onto the four tones, with integer
/// frequencies so that a 2048-point uniform rule is exact.
pub fn fourier_projection(s: [Complex64; 4]) -> [Complex64; 4] {
    let (w1, w2) = (100.0, 137.0);
    let freqs = [w1, w2, 2.0 * w1 - w2, -w1 + 2.0 * w2];
    let n = 2048;
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for k in 0..n {
        let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let a: Complex64 = (0..4).map(|j| s[j] * Complex64::from_polar(1.0, freqs[j] * t)).sum();
        let g = a * a.norm_sqr();
        for j in 0..4 {
            out[j] += g * Complex64::from_polar(1.0, -freqs[j] * t) / n as f64;
        }
    }
    out
}
