use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nslb::experiments::{write_synthetic_set, SnapshotManifest};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn nslb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nslb"))
        .args(args)
        .env("NSLB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn run_config(experiment: &str, config: &Path, out: &Path) -> Output {
    nslb(&[experiment, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn taylor_green_simulation_writes_decreasing_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("simulate", &configs().join("simulate_taylor_green.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mut reader = csv::Reader::from_path(dir.path().join("series.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), nslb::report::CSV_COLUMNS.to_vec());
    let energy: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[1].parse::<f64>().unwrap())
        .collect();
    assert_eq!(energy.len(), 501);
    assert!(energy.windows(2).all(|w| w[1] < w[0]));

    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    assert!(dir.path().join("report.meta.json").exists());
    let snap = nslb::snapshot::Snapshot::read(&dir.path().join("final.nslb")).unwrap();
    assert!((snap.time - 0.5).abs() < 1e-12);
}

#[test]
fn bundled_snapshots_fit_within_two_percent() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("fit-singularity", &configs().join("fit_singularity.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let fit = &r["results"]["snapshot_fit"];
    let manifest = &r["results"]["snapshot_manifest"];
    for key in ["lambda", "mu"] {
        let (got, want) = (fit[key].as_f64().unwrap(), manifest[key].as_f64().unwrap());
        assert!((got - want).abs() <= 0.02 * want, "{key}: {got} vs {want}");
    }
}

#[test]
fn missing_viscosity_exits_with_code_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[grid]\ndim = 2\nn = 16\n[physics]\ndt = 1e-3\nt_end = 0.1\n[initial]\nkind = \"taylor-green\"\n")
        .unwrap();
    let out = run_config("simulate", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`nu`") && stderr.contains("line"), "{stderr}");
}

#[test]
fn usage_errors_and_mismatched_experiments_exit_with_code_two() {
    assert_eq!(nslb(&["teleport", "--config", "x.toml"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("simulate", &configs().join("verify_kernels.toml"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_invariant_exits_with_code_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    let text = fs::read_to_string(configs().join("simulate_taylor_green.toml"))
        .unwrap()
        .replace("hopf_tolerance = 1e-4", "hopf_tolerance = 1e-9");
    fs::write(&cfg, text).unwrap();
    let out = run_config("simulate", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("energy_equality_gap"));
}

#[test]
fn seed_flag_overrides_the_config_and_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("simulate_random.toml");
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = nslb(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(out_dir.join("report.json")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let r: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(r["seed"], 5);
}

#[test]
fn bundled_snapshot_set_matches_its_generator() {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_cone");
    let manifest: SnapshotManifest =
        toml::from_str(&fs::read_to_string(bundled.join("manifest.toml")).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_set(dir.path(), &manifest).unwrap();
    for name in &manifest.snapshots {
        assert_eq!(fs::read(bundled.join(name)).unwrap(), fs::read(dir.path().join(name)).unwrap(), "{name}");
    }
}
