use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rrs_core::simulate::io::read_binary;

fn rrs(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrs"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RRS_OUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("rrs runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str], cwd: &Path) {
    let out = rrs(args, cwd);
    assert!(
        out.status.success(),
        "rrs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Data rows of a stamped CSV file, keyed by the header.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn config_hash(root: &Path) -> String {
    let config: serde_json::Value = serde_json::from_slice(&fs::read(root.join("config.json")).unwrap()).unwrap();
    config["config_hash"].as_str().unwrap().to_string()
}

const SMALL_HBT: &str = r#"
kind = "hbt"
seed = 21

[hbt]
powers = [16.0, 9.0, 4.0]
duration_ns = 2e6
"#;

#[test]
fn hbt_sweep_gives_a_panel_per_power_and_a_power_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hbt.toml", SMALL_HBT);
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    let out = dir.path().join("out");

    for i in 0..3 {
        let (header, rows) = csv_rows(&out.join(format!("report/g2_p{i}.csv")));
        assert_eq!(header, ["x", "y", "y_err", "model_y"]);
        assert_eq!(rows.len(), 800);
        assert!(rows.iter().any(|r| !r[3].is_empty()), "panel {i} has no model values");
    }
    let (header, rows) = csv_rows(&out.join("report/eta_mu_vs_power.csv"));
    assert_eq!(rows.len(), 3);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mu: Vec<f64> = rows.iter().map(|r| r[col("mu")].parse().unwrap()).collect();
    let rabi: Vec<f64> = rows.iter().map(|r| r[col("rabi")].parse().unwrap()).collect();
    assert_eq!(rabi, [6.0, 4.5, 3.0]);
    // μ tracks the drive and falls with it
    assert!(mu.windows(2).all(|w| w[1] < w[0]), "{mu:?}");
    for (m, r) in mu.iter().zip(&rabi) {
        assert!((m / r - 1.0).abs() < 0.05, "mu {m} vs rabi {r}");
    }
}

#[test]
fn fibre_arm_loss_gives_the_unbalanced_zero_delay_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fibre.toml",
        r#"
kind = "hom-fibre"
seed = 5

[hom]
duration_ns = 4e9
pair_rate = 1e5
singles_rate = 1e3

[fibre]
arm_loss_db = 5.8
"#,
    );
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    let (header, rows) = csv_rows(&dir.path().join("out/report/zero_delay_cross.csv"));
    assert_eq!(header, ["configuration", "arm_loss_db", "source", "g2_cross_zero", "uncertainty"]);
    let value = |conf: &str, source: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == conf && r[2] == source)
            .unwrap_or_else(|| panic!("no {conf}/{source} row"))[3]
            .parse()
            .unwrap()
    };
    assert!((value("fibre", "model") - 0.33).abs() < 0.01);
    assert!((value("fibre", "simulated") - 0.33).abs() < 0.03);
    assert!((value("fibre", "fit") - 0.33).abs() < 0.03);
    assert!((value("short", "model") - 0.5).abs() < 1e-3);
    let fibre_loss: Vec<&str> = rows.iter().filter(|r| r[0] == "fibre").map(|r| r[1].as_str()).collect();
    assert!(fibre_loss.iter().all(|&l| l == "5.8"), "{fibre_loss:?}");
}

#[test]
fn empty_duration_is_a_config_error_with_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "kind = \"hom\"\nseed = 1\n[hom]\nduration_ns = 0\n");
    let out = rrs(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duration_ns"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("noseed.toml", "kind = \"michelson\"\n[michelson]\n"),
        ("noblock.toml", "kind = \"hbt\"\nseed = 1\n"),
        ("typo.toml", "kind = \"hbt\"\nseed = 1\n[hbt]\npowerz = [1.0]\n"),
        ("badkind.toml", "kind = \"hong-ou-mandel\"\nseed = 1\n"),
        ("fourier.toml", "kind = \"hbt\"\nseed = 1\n[emitter]\nt2 = 3.0\n[hbt]\n"),
    ] {
        let cfg = write_config(dir.path(), name, text);
        let out = rrs(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = rrs(&["pipeline", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn identical_configs_rerun_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let hbt = write_config(dir.path(), "hbt.toml", &SMALL_HBT.replace("2e6", "5e5"));
    let hom = write_config(
        dir.path(),
        "hom.toml",
        "kind = \"hom\"\nseed = 9\n[hom]\nduration_ns = 1e9\npair_rate = 1e5\nbootstrap_samples = 4\n",
    );
    let sweep = write_config(dir.path(), "sweep.toml", "kind = \"power-sweep\"\nseed = 4\n[power_sweep]\n");
    for cfg in [&hbt, &hom, &sweep] {
        let cfg = cfg.to_str().unwrap();
        run_ok(&["pipeline", "--config", cfg, "--out", "first"], dir.path());
        run_ok(&["pipeline", "--config", cfg, "--out", "second", "--format", "csv"], dir.path());
        let (a, b) = (files(&dir.path().join("first")), files(&dir.path().join("second")));
        assert!(!a.is_empty());
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        for (path, bytes) in &a {
            assert!(bytes == &b[path], "{cfg}: {} differs between reruns", path.display());
        }
        fs::remove_dir_all(dir.path().join("first")).unwrap();
        fs::remove_dir_all(dir.path().join("second")).unwrap();
    }
}

#[test]
fn every_output_names_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hbt.toml", &SMALL_HBT.replace("[16.0, 9.0, 4.0]", "[9.0]"));
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", "csv"], dir.path());
    run_ok(
        &["report", "--config", cfg.to_str().unwrap(), "--out", "csv", "--format", "json"],
        dir.path(),
    );
    let root = dir.path().join("csv");
    let hash = config_hash(&root);
    assert_eq!(hash.len(), 64);
    let all = files(&root);
    for ext in ["bin", "csv", "json"] {
        assert!(all.keys().any(|p| p.extension().unwrap() == ext), "no .{ext} output");
    }
    for (path, bytes) in &all {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let first = String::from_utf8_lossy(bytes).lines().next().unwrap_or_default().to_string();
                assert_eq!(first, format!("# rrs config_hash={hash}"), "{}", path.display());
            }
            Some("json") => {
                let v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                assert_eq!(v["config_hash"], hash.as_str(), "{}", path.display());
            }
            Some("bin") => {
                let file = read_binary(bytes.as_slice()).unwrap();
                assert!(file.annotation.contains(&hash), "{}", path.display());
            }
            other => panic!("unexpected output {} ({other:?})", path.display()),
        }
    }
    // fits carry full provenance
    let fit: serde_json::Value = serde_json::from_slice(&all[Path::new("fits/hbt_p0.json")]).unwrap();
    let prov = &fit["provenance"];
    assert_eq!(prov["config_hash"], hash.as_str());
    assert_eq!(prov["seed"], 21);
    assert!(prov["input_hashes"]["histograms/hbt_p0.csv"].is_string());
    // JSON panels have the same columns as CSV ones
    let panel: serde_json::Value = serde_json::from_slice(&all[Path::new("report/g2_p0.json")]).unwrap();
    let row = &panel["rows"][400];
    for key in ["x", "y", "y_err", "model_y"] {
        assert!(row.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn seed_override_changes_hash_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", "kind = \"michelson\"\n[michelson]\n");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["simulate", "--config", cfg, "--seed", "1", "--out", "a"], dir.path());
    run_ok(&["simulate", "--config", cfg, "--seed", "2", "--out", "b"], dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ne!(config_hash(&a), config_hash(&b));
    assert_ne!(fs::read(a.join("data/michelson.csv")).unwrap(), fs::read(b.join("data/michelson.csv")).unwrap());
}

#[test]
fn stages_chain_through_files_and_failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hbt.toml", &SMALL_HBT.replace("[16.0, 9.0, 4.0]", "[4.0]"));
    let cfg = cfg.to_str().unwrap();

    // fitting before anything was correlated
    let out = rrs(&["fit", "--config", cfg, "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage `fit`") && stderr.contains("rrs correlate"), "{stderr}");

    run_ok(&["simulate", "--config", cfg, "--out", "out"], dir.path());
    run_ok(&["correlate", "--config", cfg, "--out", "out"], dir.path());

    // inputs from another configuration are refused
    let out = rrs(&["fit", "--config", cfg, "--seed", "99", "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("belongs to configuration"));

    // a corrupted histogram fails the fit stage and leaves earlier outputs
    let hist = dir.path().join("out/histograms/hbt_p0.csv");
    let text = fs::read_to_string(&hist).unwrap();
    fs::write(&hist, text.replacen("\n-19950,", "\n-19951,", 1)).unwrap();
    let out = rrs(&["fit", "--config", cfg, "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `fit` failed"));
    assert!(dir.path().join("out/tags/hbt_p0.bin").exists());
    assert!(dir.path().join("out/histograms/hbt_p0.json").exists());
    assert!(!dir.path().join("out/fits").exists());

    run_ok(&["correlate", "--config", cfg, "--out", "out"], dir.path());
    run_ok(&["fit", "--config", cfg, "--out", "out"], dir.path());
    run_ok(&["report", "--config", cfg, "--out", "out"], dir.path());
    assert!(dir.path().join("out/report/eta_mu_vs_power.csv").exists());
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "visibility.toml", "kind = \"michelson\"\nseed = 3\n[michelson]\n");
    let out = Command::new(env!("CARGO_BIN_EXE_rrs"))
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--quiet"])
        .current_dir(dir.path())
        .env("RRS_OUT_DIR", dir.path().join("runs"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("runs/visibility/data/michelson.csv").exists());
}

#[test]
fn michelson_report_recovers_the_configured_doublet() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", "kind = \"michelson\"\nseed = 8\n[michelson]\n");
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", "out", "--format", "json"], dir.path());
    let table: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/report/parameters.json")).unwrap()).unwrap();
    let value = |name: &str| -> f64 {
        table["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["parameter"] == name)
            .unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert!((value("coherence_time") / 0.447 - 1.0).abs() < 0.02);
    assert!((value("fss") / 26.3 - 1.0).abs() < 0.02);
}
