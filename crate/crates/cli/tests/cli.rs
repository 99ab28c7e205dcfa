use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dipolar(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dipolar"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("DIPOLAR_OUT_DIR")
        .output()
        .expect("run dipolar")
}

fn ensemble_file(dir: &Path, name: &str, positions: &[[f64; 3]]) -> PathBuf {
    let atoms: Vec<Value> = positions.iter().map(|p| serde_json::json!({ "position": p })).collect();
    let doc = serde_json::json!({
        "omega0_over_gamma": 1000.0,
        "length_unit": "inverse_k0",
        "atoms": atoms,
    });
    let path = dir.join(name);
    fs::write(&path, doc.to_string()).unwrap();
    path
}

/// Numeric CSV body (header and any label column dropped).
fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().filter_map(|s| s.parse::<f64>().ok()).collect())
        .collect()
}

fn metadata(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn single_atom_couplings_vanish() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "one.json", &[[0.0, 0.0, 0.0]]);
    let out = tmp.path().join("out");
    ok(&dipolar(&["couplings", f.to_str().unwrap(), "--variant", "extended"], &out));
    for name in ["b.csv", "g.csv"] {
        let rows = csv_rows(&out.join(name));
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().flatten().all(|v| *v == 0.0));
    }
    let header = fs::read_to_string(out.join("b.csv")).unwrap();
    assert!(header.starts_with("channel,atom0_m-1_re,atom0_m-1_im,atom0_m0_re"));
    let meta = metadata(&out);
    assert_eq!(meta["command"], "couplings");
    assert_eq!(meta["quadrature"]["epsilon_sequence"], serde_json::json!([0.04, 0.02, 0.01]));
}

#[test]
fn compare_extended_with_full_numeric() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "pair.json", &[[0.0, 0.0, 0.0], [0.3, 0.4, 0.5]]);
    let out = tmp.path().join("out");
    ok(&dipolar(
        &["couplings", f.to_str().unwrap(), "--variant", "full_numeric", "--compare", "extended,full_numeric"],
        &out,
    ));
    let meta = metadata(&out);
    let rel = meta["results"]["compare"]["max_rel_diff"].as_f64().unwrap();
    assert!(rel <= 1e-2, "{rel}");
    assert!(out.join("g_diff.csv").exists());
    assert!(out.join("g_extended.csv").exists());
}

#[test]
fn malformed_and_unknown_fields_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let o = dipolar(&["spectrum", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid ensemble file"));

    fs::write(
        &bad,
        r#"{"omega0_over_gamma": 1000, "length_unit": "inverse_k0", "atoms": [{"position": [0,0,0]}], "extra": 1}"#,
    )
    .unwrap();
    let o = dipolar(&["spectrum", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));

    let o = dipolar(&["spectrum", "/nonexistent/file.json"], &out);
    assert_eq!(o.status.code(), Some(2));
    let o = dipolar(&["spectrum", bad.to_str().unwrap(), "--variant", "bogus"], &out);
    assert_eq!(o.status.code(), Some(2));
    let o = dipolar(&["couplings", bad.to_str().unwrap(), "--compare", "extended"], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cutoff_below_minimum_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "pair.json", &[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    let o = dipolar(&["couplings", f.to_str().unwrap(), "--variant", "extended", "--cutoff", "5"], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_single_atom_and_dicke_pair() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "one.json", &[[0.0, 0.0, 0.0]]);
    let out = tmp.path().join("one");
    ok(&dipolar(&["spectrum", f.to_str().unwrap()], &out));
    let rows = csv_rows(&out.join("eigenmodes.csv"));
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!((r[0] - 1.0).abs() < 1e-12 && r[1].abs() < 1e-12);
    }

    let f = ensemble_file(tmp.path(), "dicke.json", &[[0.0, 0.0, 0.0], [0.0, 0.0, 1e-3]]);
    let out = tmp.path().join("dicke");
    ok(&dipolar(&["spectrum", f.to_str().unwrap()], &out));
    let rates: Vec<f64> = csv_rows(&out.join("eigenmodes.csv")).iter().map(|r| r[0]).collect();
    assert_eq!(rates.len(), 6);
    for r in &rates[..3] {
        assert!((r - 2.0).abs() < 2e-3, "{rates:?}");
    }
    for r in &rates[3..] {
        assert!(r.abs() < 1e-3, "{rates:?}");
    }
    assert!((rates.iter().sum::<f64>() - 6.0).abs() < 1e-10);
}

#[test]
fn evolve_single_atom_and_presets() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "one.json", &[[0.0, 0.0, 0.0]]);
    let out = tmp.path().join("one");
    ok(&dipolar(&["evolve", f.to_str().unwrap(), "--initial", "single:0,0", "--t-final", "1"], &out));
    let rows = csv_rows(&out.join("trajectory.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert!((last[7] - (-1.0f64).exp()).abs() < 1e-8);
    assert_eq!(metadata(&out)["results"]["final_population"].as_f64().unwrap(), last[7]);

    let f = ensemble_file(tmp.path(), "pair.json", &[[0.0, 0.0, 0.0], [0.0, 0.0, 0.05]]);
    let out = tmp.path().join("pair");
    ok(&dipolar(
        &["evolve", f.to_str().unwrap(), "--initial", "symmetric:0", "--t-final", "1", "--dt-max", "0.001"],
        &out,
    ));
    let rows = csv_rows(&out.join("trajectory.csv"));
    let pop_col = 1 + 12;
    for r in rows.iter().step_by(50) {
        assert!((r[pop_col] - (-2.0 * r[0]).exp()).abs() < 1e-3, "{r:?}");
    }

    for bad in ["single:3,0", "symmetric:2", "dicke", "1,0"] {
        let o = dipolar(&["evolve", f.to_str().unwrap(), "--initial", bad, "--t-final", "1"], &out);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn microsim_scope_guard_and_single_atom() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "three.json", &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let out = tmp.path().join("three");
    let o = dipolar(
        &["microsim", f.to_str().unwrap(), "--sector", "full", "--band-halfwidth", "3000", "--n-omega", "400", "--t-final", "0.01"],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));

    let f = ensemble_file(tmp.path(), "one.json", &[[0.0, 0.0, 0.0]]);
    let out = tmp.path().join("one");
    ok(&dipolar(
        &["microsim", f.to_str().unwrap(), "--initial", "single:0,1", "--angular-order", "9"],
        &out,
    ));
    let meta = metadata(&out);
    let fit = &meta["results"]["fit"]["result"];
    assert!((fit["rate"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert!((meta["results"]["effective"]["rate"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let header = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with("population,emission_rate,photon_population,alpha_population,norm"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "tri.json", &[[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.1, 1.3, 0.7]]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&dipolar(&["couplings", f.to_str().unwrap(), "--variant", "extended"], &a));
    ok(&dipolar(&["couplings", f.to_str().unwrap(), "--variant", "extended", "--workers", "1"], &b));
    for name in ["b.csv", "g.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn out_dir_from_environment_and_verify_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_dipolar"))
        .args(["verify", "--suite", "tensors"])
        .env("DIPOLAR_OUT_DIR", &out)
        .output()
        .unwrap();
    ok(&o);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 5);
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS [tensors]"));

    let o = dipolar(&["verify", "--suite", "lamb"], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn units_flag_overrides_file() {
    let tmp = TempDir::new().unwrap();
    let f = ensemble_file(tmp.path(), "pair.json", &[[0.0, 0.0, 0.0], [0.0, 0.0, 0.5]]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&dipolar(&["spectrum", f.to_str().unwrap(), "--units", "wavelength"], &a));
    let g = ensemble_file(tmp.path(), "pair2.json", &[[0.0, 0.0, 0.0], [0.0, 0.0, std::f64::consts::PI]]);
    ok(&dipolar(&["spectrum", g.to_str().unwrap()], &b));
    let ra = csv_rows(&a.join("eigenmodes.csv"));
    let rb = csv_rows(&b.join("eigenmodes.csv"));
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x[0] - y[0]).abs() < 1e-12);
    }
    assert_eq!(metadata(&a)["ensemble"]["length_unit"], "wavelength");
}
