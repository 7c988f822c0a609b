use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_mixchart");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_CHART: &str = r#"{
  "process": {"mu0": 0.0, "sigma": 1.0, "s": 0.3, "repair_residual": 0.25},
  "shift": {"mixture": {"zeta": 0.4, "xi": 0.5, "delta": 0.6}},
  "costs": {"c_s": 1, "c_f": 10, "c_rb": 20, "c_rs": 5, "c_os": 3, "c_ob": 2},
  "chart": {"h": 1.0, "k": 2.5},
  "numerics": {"levels": 120, "n_intervals": 20000, "seed": 3}
}"#;

#[test]
fn moments_demo_configs_agree_with_series() {
    let tmp = TempDir::new().unwrap();
    for name in ["moments_zeta0.json", "moments_zeta05.json", "moments_zeta1.json"] {
        let out = tmp.path().join(name);
        let cfg = configs().join(name);
        let res = run(&["moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("moments.json")).unwrap()).unwrap();
        assert!(rows[0]["rel_diff"].as_f64().unwrap() < 1e-8);
        assert!(out.join("manifest.json").exists());
        assert!(out.join("config.resolved.json").exists());
    }
}

#[test]
fn rerun_from_resolved_config_is_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "chart.json", SMALL_CHART);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let res = run(&["chart", "--config", &cfg, "--out", first.to_str().unwrap(), "--simulate"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let resolved = first.join("config.resolved.json");
    let res = run(&["chart", "--config", resolved.to_str().unwrap(), "--out", second.to_str().unwrap(), "--simulate"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for file in ["config.resolved.json", "stationary.csv", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(second.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn per_path_output_ignores_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("moments_zeta05.json");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let res = run(&[
            "simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
            "--threads", threads, "--seed", "11", "--per-path",
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push((fs::read(out.join("paths.csv")).unwrap(), fs::read(out.join("simulate.csv")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(text.lines().count(), 100_001);
}

#[test]
fn seed_flag_changes_simulation() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("moments_zeta0.json");
    let read = |seed: &str| {
        let out = tmp.path().join(seed);
        let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(res.status.success());
        let resolved = fs::read_to_string(out.join("config.resolved.json")).unwrap();
        assert!(resolved.contains(&format!("\"seed\": {seed}")));
        fs::read(out.join("simulate.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn optimize_writes_surface_and_optimum() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL_CHART.replace(
        r#""chart": {"h": 1.0, "k": 2.5}"#,
        r#""search": {"h": {"min": 0.5, "max": 1.5, "count": 3}, "k": {"min": 2.0, "max": 3.0, "count": 3}}"#,
    );
    let cfg = write_config(&tmp, "opt.json", &text);
    let out = tmp.path().join("opt");
    let res = run(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let surface = fs::read_to_string(out.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 10);
    assert!(surface.starts_with("h,k,cost,error"));
    let opt: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("optimum.json")).unwrap()).unwrap();
    let best = opt["best_cost"].as_f64().unwrap();
    for line in surface.lines().skip(1) {
        let cost: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(cost >= best);
    }
}

#[test]
fn malformed_config_exits_2_with_location() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "bad.json", "{\n  \"process\": {\"mu0\": 0, \"sigma\": 1, \"s\": 0.3},\n  \"shift\": {\"mixture\": {\"zeta\": 0.5, \"xi\": 0.5, \"delta\": 1, \"typo\": 1}}\n}");
    let res = run(&["moments", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
    assert!(err.contains("typo"), "{err}");
}

#[test]
fn missing_section_and_bad_values_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "chart.json", SMALL_CHART);
    let res = run(&["optimize", "--config", &cfg, "--out", tmp.path().join("a").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("search"));

    let bad = write_config(&tmp, "neg.json", &SMALL_CHART.replace("\"xi\": 0.5", "\"xi\": 1.5"));
    let res = run(&["chart", "--config", &bad, "--out", tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn failed_tolerance_exits_3_and_keeps_outputs() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("moments_zeta05.json"))
        .unwrap()
        .replace("\"seed\": 7", "\"seed\": 7, \"n_paths\": 2000, \"z_limit\": 0.0")
        .replace("\"n_paths\": 100000, ", "");
    let cfg = write_config(&tmp, "strict.json", &text);
    let out = tmp.path().join("o");
    let res = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("simulate.csv").exists());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"exit_code\": 3"));
}
