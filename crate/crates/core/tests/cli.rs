use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cochlea"))
}

fn base(experiment: Value) -> Value {
    json!({
        "geometry": { "n": 3, "first_radius": 1.0, "s": 1.05, "gap_ratio": 0.5, "source_x": -5.0 },
        "material": { "v": 1.0, "v_b": 1.0, "delta": 0.001, "beta": 1.0 },
        "numerics": { "self_check": false },
        "experiment": experiment
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn header(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).lines().next().unwrap().to_string()
}

fn small_sweep() -> Value {
    base(json!({ "type": "sweep", "forcing": [1e-6, 1e-2],
                 "grid": { "min": 0.01, "max": 0.05, "points": 40, "resonance_points": 5 } }))
}

fn small_phase() -> Value {
    base(json!({ "type": "phase", "forcing": 1e-6,
                 "grid": { "min": 0.004, "max": 0.06, "points": 60, "resonance_points": 5 } }))
}

fn small_twotone() -> Value {
    base(json!({ "type": "twotone", "mode": 2, "grid": { "points": 24, "resonance_points": 0 } }))
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for (sub, cfg, file) in [
        ("sweep", small_sweep(), "sweep.csv"),
        ("phase", small_phase(), "phase.csv"),
        ("twotone", small_twotone(), "twotone.csv"),
    ] {
        let config = write_config(tmp.path(), &format!("{sub}.json"), &cfg);
        let (a, b) = (tmp.path().join(format!("{sub}-1")), tmp.path().join(format!("{sub}-3")));
        let ra = run(sub, &config, &a, &["--threads", "1"]);
        let rb = run(sub, &config, &b, &["--threads", "3"]);
        assert_eq!(ra.status.code(), Some(0), "{sub}: {}", stderr(&ra));
        assert_eq!(rb.status.code(), Some(0), "{sub}: {}", stderr(&rb));
        for f in [file, "resonances.csv"] {
            let (x, y) = (read(a.join(f)), read(b.join(f)));
            assert!(x == y, "{sub}: {f} differs between thread counts");
            assert!(!x.contains(&b'\r'), "{f} has CR line endings");
            assert!(x.ends_with(b"\n"));
        }
        let manifest: Value = serde_json::from_slice(&read(b.join("run.json"))).unwrap();
        assert_eq!(manifest["threads"], 3);
    }
}

#[test]
fn cached_and_uncached_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "sweep.json", &small_sweep());
    let out = tmp.path().join("out");
    let cold = tmp.path().join("cold");
    assert_eq!(run("sweep", &config, &out, &[]).status.code(), Some(0));
    let first = read(out.join("sweep.csv"));
    assert!(out.join("cache").is_dir());
    assert_eq!(run("sweep", &config, &out, &[]).status.code(), Some(0));
    let manifest: Value = serde_json::from_slice(&read(out.join("run.json"))).unwrap();
    assert_eq!(manifest["cache"]["hit"], true);
    assert_eq!(read(out.join("sweep.csv")), first);
    assert_eq!(run("sweep", &config, &cold, &["--no-cache"]).status.code(), Some(0));
    assert!(!cold.join("cache").exists());
    assert_eq!(read(cold.join("sweep.csv")), first);
    let manifest: Value = serde_json::from_slice(&read(cold.join("run.json"))).unwrap();
    assert_eq!(manifest["cache"]["enabled"], false);
}

#[test]
fn csv_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("sweep", small_sweep(), "sweep.csv", "Omega,F,mode,abs_X_over_F,re_X,im_X,residual,flag"),
        ("phase", small_phase(), "phase.csv", "x1,x2,Omega,R,phi,phase_delay_cycles,group_delay_cycles"),
        (
            "twotone",
            small_twotone(),
            "twotone.csv",
            "Omega2,abs_X10,abs_X01,abs_X21,abs_X12,abs_X01_passive,residual,flag",
        ),
    ];
    for (sub, cfg, file, expect) in cases {
        let config = write_config(tmp.path(), &format!("{sub}.json"), &cfg);
        let out = tmp.path().join(sub);
        let r = run(sub, &config, &out, &[]);
        assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
        assert_eq!(header(&read(out.join(file))), expect);
        let manifest: Value = serde_json::from_slice(&read(out.join("run.json"))).unwrap();
        for key in ["tool", "config", "hashes", "wall_times_s", "solver", "warnings", "cache"] {
            assert!(manifest.get(key).is_some(), "run.json lacks {key}");
        }
        assert_eq!(manifest["config"], cfg_with_defaults(&config));
    }
}

fn cfg_with_defaults(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    serde_json::to_value(cochlea::config::parse_config(&text).unwrap()).unwrap()
}

#[test]
fn resonances_of_default_array() {
    let tmp = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/resonances.json");
    let r = run("resonances", &config, tmp.path(), &[]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let text = String::from_utf8(read(tmp.path().join("resonances.csv"))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,re_omega,im_omega,residual");
    assert_eq!(lines.len(), 7);
    for (k, line) in lines[1..].iter().enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0] as usize, k + 1);
        assert!(cols[1] > 0.0 && cols[2] < 0.0 && cols[3] <= 1e-10);
    }
}

#[test]
fn flagged_points_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = base(json!({ "type": "sweep", "forcing": [1e12],
                           "grid": { "min": 0.01, "max": 0.05, "points": 12, "resonance_points": 0 } }));
    let config = write_config(tmp.path(), "big.json", &cfg);
    let r = run("sweep", &config, tmp.path(), &[]);
    assert_eq!(r.status.code(), Some(2), "{}", stderr(&r));
    let manifest: Value = serde_json::from_slice(&read(tmp.path().join("run.json"))).unwrap();
    assert!(manifest["solver"]["flagged_points"].as_u64().unwrap() > 0);
    let text = String::from_utf8(read(tmp.path().join("sweep.csv"))).unwrap();
    assert!(text.lines().skip(1).any(|l| l.ends_with(",1")));
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut zero = small_sweep();
    zero["material"]["delta"] = json!(0.0);
    let mut typo = small_sweep();
    typo["material"]["betaa"] = json!(1.0);
    let mut mode = small_twotone();
    mode["experiment"]["mode"] = json!(9);
    for (cfg, needle) in [(zero, "delta must be positive"), (typo, "betaa"), (mode, "experiment.mode")] {
        let config = write_config(tmp.path(), "bad.json", &cfg);
        for out in [
            bin().args(["validate", "--config"]).arg(&config).output().unwrap(),
            run(cfg["experiment"]["type"].as_str().unwrap(), &config, &tmp.path().join("o"), &[]),
        ] {
            assert_eq!(out.status.code(), Some(1));
            assert!(stderr(&out).contains(needle), "{needle}: {}", stderr(&out));
        }
    }
    assert!(!tmp.path().join("o").join("sweep.csv").exists());
}

#[test]
fn validate_accepts_shipped_configs() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["resonances", "sweep", "phase", "twotone", "oracle"] {
        let out = bin().args(["validate", "--config"]).arg(dir.join(format!("{name}.json"))).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("{name} experiment")));
    }
}

#[test]
fn subcommand_must_match_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "sweep.json", &small_sweep());
    let r = run("phase", &config, tmp.path(), &[]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("`sweep`"));
    let missing = run("sweep", &tmp.path().join("nope.json"), tmp.path(), &[]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn oracle_runs_without_a_modal_system() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = base(json!({ "type": "oracle", "mu": 0.0, "omega": 1.0, "forcing": [1e-6, 1e-4] }));
    let config = write_config(tmp.path(), "oracle.json", &cfg);
    let r = run("oracle", &config, tmp.path(), &[]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let text = String::from_utf8(read(tmp.path().join("oracle.csv"))).unwrap();
    assert_eq!(text.lines().next().unwrap(), "mu,omega0,Omega,F,amplitude,drift,t_final");
    let amp: f64 = text.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((amp - 1e-2).abs() < 1e-6);
}
