use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use euler_lab::config::RunConfig;
use euler_lab::field::WaveLattice;
use euler_lab::io::{read_trajectory, write_path, write_trajectory};
use euler_lab::noise::{NoiseCoefficient, NoiseParams, WienerPath};

const SMALL: &str = "[grid]\nn = 8\n\n[time]\ndt = 0.01\nhorizon = 0.2\n\n[noise]\ncutoff = 2\n\n[wild]\ndepth = 2\n\n[run]\npaths = 10\ninitial_cutoff = 2\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_euler-lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), format!("{SMALL}{extra}")).unwrap();
    dir
}

fn subdirs(p: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(p)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn defaults_print_a_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["defaults"]);
    assert!(o.status.success());
    let c = RunConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(c, RunConfig::default());
}

#[test]
fn simulate_writes_verified_trajectories() {
    let dir = setup("");
    let o = run(dir.path(), &["--config", "run.toml", "--out", "a", "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("a");
    assert_eq!(subdirs(&out).len(), 10);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 10);
    for r in reports {
        let names: Vec<&str> = r["checks"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["name"].as_str().unwrap())
            .collect();
        assert_eq!(names, ["m1_divergence", "m1_defect", "m3_trace", "m3_energy"]);
    }
    assert!(RunConfig::load(&fs::read_to_string(out.join("config.toml")).unwrap()).is_ok());
    let o = run(dir.path(), &["--config", "run.toml", "verify", "a"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn simulate_is_deterministic_across_runs_and_jobs() {
    let dir = setup("");
    for (out, jobs) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let o = run(
            dir.path(),
            &[
                "--config", "run.toml", "--seed", "7", "--jobs", jobs, "--out", out, "simulate",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = dir.path().join("a");
    let names = subdirs(&a);
    assert_eq!(names[0], "traj-000007");
    for name in &names {
        let base = fs::read(a.join(name).join("scalars.csv")).unwrap();
        for other in ["b", "c"] {
            assert_eq!(
                fs::read(dir.path().join(other).join(name).join("scalars.csv")).unwrap(),
                base
            );
        }
    }
}

#[test]
fn cfl_violation_is_rejected_before_stepping() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn = 8\nviscosity = 0.0\n\n[time]\ndt = 0.25\nhorizon = 0.5\n\n[noise]\ncutoff = 2\n\n[wild]\ndepth = 2\n\n[run]\ninitial_cutoff = 2\ninitial_norm = 50.0\n";
    fs::write(dir.path().join("cfl.toml"), text).unwrap();
    let o = run(dir.path(), &["--config", "cfl.toml", "--out", "x", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CFL"), "{}", stderr(&o));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("[grid]\nn = 7\n", "lattice"),
        ("[grid]\nsize = 8\n", "syntax"),
        ("[noise]\ngamma = 3.1\n", "noise_regularity"),
    ] {
        fs::write(dir.path().join("bad.toml"), text).unwrap();
        let o = run(dir.path(), &["--config", "bad.toml", "simulate"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
    }
}

#[test]
fn verify_flags_a_tampered_energy_process() {
    let dir = setup("");
    let o = run(dir.path(), &["--config", "run.toml", "--out", "a", "simulate"]);
    assert_eq!(o.status.code(), Some(0));
    let traj = dir.path().join("a").join("traj-000000");
    let mut tr = read_trajectory(&traj).unwrap();
    for z in tr.scalars.z.iter_mut() {
        *z *= 0.9;
    }
    write_trajectory(&traj, &tr, serde_json::Value::Null).unwrap();
    let o = run(dir.path(), &["--config", "run.toml", "verify", "a"]);
    assert_eq!(o.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn wild_requires_a_driver_seed() {
    let dir = setup("");
    let o = run(dir.path(), &["--config", "run.toml", "--out", "w", "wild"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("driver_seed"));
}

#[test]
fn wild_then_select_prefers_the_minimal_defect_level() {
    let dir = setup("");
    let o = run(
        dir.path(),
        &["--config", "run.toml", "--seed", "3", "--out", "w", "wild"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let w = dir.path().join("w");
    assert!(subdirs(&w).starts_with(&["wild-l2".to_string(), "wild-linf".to_string()]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.join("wild_report.json")).unwrap()).unwrap();
    let diff = &report["slope_differences"][0];
    let (obs, exp) = (diff["observed"].as_f64().unwrap(), diff["expected"].as_f64().unwrap());
    assert!((obs / exp - 1.0).abs() < 0.1, "{diff}");
    let design: serde_json::Value = serde_json::from_str(&fs::read_to_string(w.join("design.json")).unwrap()).unwrap();
    assert_eq!(design["layers"].as_array().unwrap().len(), 2);

    let select = |out: &str| {
        let o = run(
            dir.path(),
            &[
                "--config",
                "run.toml",
                "--out",
                out,
                "select",
                "w/wild-linf",
                "w/wild-l2",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "wild-l2");
        fs::read_to_string(dir.path().join(out).join("decision.json")).unwrap()
    };
    let log = select("s1");
    assert_eq!(log, select("s2"));
    let v: serde_json::Value = serde_json::from_str(&log).unwrap();
    assert_eq!(v["admissibility"][1][0], "Less");

    let o = run(
        dir.path(),
        &["--config", "run.toml", "--out", "s3", "select", "w/wild-l2"],
    );
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s3/decision.json")).unwrap()).unwrap();
    assert_eq!(v["chosen"], 0);
    assert!(v["rounds"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["survivors"] == serde_json::json!([0])));
}

#[test]
fn wild_with_zero_depth_emits_the_driver() {
    let dir = setup("");
    let text = fs::read_to_string(dir.path().join("run.toml"))
        .unwrap()
        .replace("depth = 2", "depth = 0");
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let o = run(
        dir.path(),
        &["--config", "run.toml", "--seed", "1", "--out", "w", "wild"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("wild-l2-s1"));
    let tr = read_trajectory(&dir.path().join("w/wild-l2/path-000001")).unwrap();
    let driver = tr.wiener.as_ref().unwrap();
    let last = tr.final_frame().unwrap();
    assert!(last.x.max_abs_diff(driver.gb_at(last.index).as_vector()) < 1e-12);
}

#[test]
fn select_rejects_missing_candidates() {
    let dir = setup("");
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = run(dir.path(), &["--config", "run.toml", "select", "empty"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no trajectories"));
    let o = run(dir.path(), &["--config", "run.toml", "select"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn norms_of_zero_and_corrupt_paths() {
    let dir = tempfile::tempdir().unwrap();
    let l = WaveLattice::new(8).unwrap();
    let p = NoiseParams {
        cutoff: Some(2),
        ..NoiseParams::default()
    };
    let g = Arc::new(NoiseCoefficient::spectral(&l, p).unwrap());
    let zero = WienerPath::from_increments(&g, 0.01, 0, vec![0.0; 20 * g.len()]).unwrap();
    write_path(&dir.path().join("zero.bin"), &zero).unwrap();
    let o = run(dir.path(), &["norms", "zero.bin", "--exponents", "0.2,0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for h in r["holder_h1"].as_array().unwrap() {
        assert_eq!(h["value"], 0.0);
    }
    assert_eq!(r["sobolev_sup"], 0.0);
    assert_eq!(r["iterated_slobodeckij"], 0.0);
    assert_eq!(r["stop"]["trigger"], "Cap");
    assert_eq!(r["consistent"], true);

    fs::write(dir.path().join("bad.bin"), b"XXXX0123456789abcdef").unwrap();
    let o = run(dir.path(), &["norms", "bad.bin"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"));
}
