use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_subclock")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("subclock_cli_{}_{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn estimate_exp_recovers_sample_mean() {
    let dir = scratch("est_exp");
    let input = dir.join("durations.csv");
    fs::write(&input, "duration_ms\n1\n2\n3\n").unwrap();
    let out = dir.join("out");
    let status = Command::new(bin())
        .args([
            "estimate",
            "exp",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["model"], "exp");
    assert_eq!(fit["params"]["nu"], 2.0);
    assert_eq!(fit["n_obs"], 3);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_input_fails_without_partial_outputs() {
    let dir = scratch("missing");
    let out = dir.join("out");
    let output = Command::new(bin())
        .args([
            "estimate",
            "exp",
            "--input",
            dir.join("nope.csv").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(!out.join("fit.json").exists());
    assert!(!out.join("manifest.json").exists());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_params_usage_error() {
    let dir = scratch("badparams");
    let output = Command::new(bin())
        .args([
            "simulate", "exp", "--nu", "-5", "--n", "10",
            "--out", dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nu"), "stderr should explain the domain: {stderr}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_supplies_defaults_flags_override() {
    let dir = scratch("config");
    fs::write(dir.join("run.conf"), "nu=300.7\nn=50\nseed=9\n").unwrap();
    let out_a = dir.join("a");
    let status = Command::new(bin())
        .args([
            "simulate", "exp",
            "--config", dir.join("run.conf").to_str().unwrap(),
            "--out", out_a.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let rows = fs::read_to_string(out_a.join("durations.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51); // header + 50

    // An explicit flag wins over the config value.
    let out_b = dir.join("b");
    let status = Command::new(bin())
        .args([
            "simulate", "exp", "--n", "7",
            "--config", dir.join("run.conf").to_str().unwrap(),
            "--out", out_b.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let rows = fs::read_to_string(out_b.join("durations.csv")).unwrap();
    assert_eq!(rows.lines().count(), 8);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn env_var_default_output_dir() {
    let dir = scratch("envout");
    let out = dir.join("from_env");
    let status = Command::new(bin())
        .env("SUBCLOCK_OUT_DIR", &out)
        .args(["simulate", "exp", "--nu", "100", "--n", "5", "--seed", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("durations.csv").exists());
    assert!(out.join("manifest.json").exists());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn kbar_range_emits_table() {
    let dir = scratch("kbar_range");
    let sim_out = dir.join("sim");
    assert!(Command::new(bin())
        .args([
            "simulate", "msmd", "--kbar", "2", "--lambda", "0.1", "--gamma-kbar", "0.5",
            "--b", "2.0", "--m0", "0.4", "--n", "800", "--seed", "1",
            "--out", sim_out.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let est_out = dir.join("est");
    assert!(Command::new(bin())
        .args([
            "estimate", "msmd",
            "--input", sim_out.join("durations.csv").to_str().unwrap(),
            "--kbar-range", "1..2",
            "--out", est_out.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let table = fs::read_to_string(est_out.join("kbar_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "kbar,lambda,gamma_kbar,b,m0,loglik,converged,error");
    assert_eq!(lines.len(), 3); // header + kbar 1 and 2
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn gof_identical_files_zero_divergence() {
    let dir = scratch("gof_same");
    let ticks = dir.join("ticks.csv");
    let mut body = String::from("timestamp_ms,price\n");
    let mut price = 1000.0;
    for i in 0..2000i64 {
        if i % 3 == 0 {
            price += if i % 2 == 0 { 0.25 } else { -0.25 };
        }
        body.push_str(&format!("{},{price}\n", i * 40));
    }
    fs::write(&ticks, body).unwrap();
    let out = dir.join("out");
    assert!(Command::new(bin())
        .args([
            "gof",
            "--data", ticks.to_str().unwrap(),
            "--sim", ticks.to_str().unwrap(),
            "--tau", "500,2000",
            "--out", out.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let table = fs::read_to_string(out.join("gof.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        let chi2: f64 = fields[3].parse().unwrap();
        let kl: f64 = fields[6].parse().unwrap();
        assert!(chi2.abs() < 1e-9, "chi2 nonzero: {row}");
        assert!(kl.abs() < 1e-12, "kl nonzero: {row}");
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn leadlag_emits_full_lag_grid() {
    let dir = scratch("leadlag");
    let mk = |seed: u64| -> String {
        let mut body = String::from("timestamp_ms,price\n");
        let mut price = 500.0;
        for i in 0..1500i64 {
            if (i + seed as i64) % 4 == 0 {
                price += if (i / 4) % 2 == 0 { 0.25 } else { -0.25 };
            }
            body.push_str(&format!("{},{price}\n", i * 60));
        }
        body
    };
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    fs::write(&a, mk(0)).unwrap();
    fs::write(&b, mk(1)).unwrap();
    let out = dir.join("out");
    assert!(Command::new(bin())
        .args([
            "leadlag",
            "--leader", a.to_str().unwrap(),
            "--follower", b.to_str().unwrap(),
            "--max-lag", "30",
            "--out", out.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let resp = fs::read_to_string(out.join("response.csv")).unwrap();
    assert_eq!(resp.lines().count(), 62); // header + 61 lags
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_tmsmd_manifest_carries_nu_max() {
    let dir = scratch("tmsmd_manifest");
    let out = dir.join("out");
    assert!(Command::new(bin())
        .args([
            "simulate", "tmsmd", "--kbar", "7", "--lambda", "0.0966",
            "--gamma-kbar", "0.5884", "--b", "4.461", "--m0", "0.1386",
            "--nu-max", "5866", "--n", "100", "--seed", "1",
            "--out", out.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("5866"));
    assert!(out.join("durations.csv").exists());
    fs::remove_dir_all(&dir).ok();
}
