use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qmeas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmeas")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}); stderr: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn error_payload(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error payload")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema")
}

fn assert_valid(schema: &str, value: &Value) {
    let text = std::fs::read_to_string(schema_dir().join(format!("{schema}.schema.json"))).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn harmonic_solve_reports_ground_energy_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmeas(&["solve", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_valid("solve", &r);
    let energies: Vec<f64> = serde_json::from_value(r["energies"].clone()).unwrap();
    assert!((energies[0] - 0.5).abs() <= 1e-4);
    assert_eq!(energies.len(), 5);

    let csv = std::fs::read_to_string(dir.path().join("eigen.csv")).unwrap();
    assert!(csv.starts_with("x,psi0,psi1,psi2,psi3,psi4\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 2049);
    let on_disk: Value = serde_json::from_slice(&std::fs::read(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(on_disk, r);
}

#[test]
fn narrow_domain_is_a_numeric_error() {
    let out = qmeas(&["solve", "--domain", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_payload(&out);
    assert_valid("error", &e);
    assert_eq!(e["error"]["code"], "domain-too-small");
    assert!(out.stdout.is_empty());
}

#[test]
fn square_well_table_gives_ascending_box_levels() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("well.csv");
    let n = 1201;
    let mut text = String::from("x,V\n");
    for i in 0..n {
        let x = -1.5 + 3.0 * i as f64 / (n - 1) as f64;
        let v = if x.abs() <= 0.5 { 0.0 } else { 1e6 };
        text.push_str(&format!("{x},{v}\n"));
    }
    std::fs::write(&table, text).unwrap();
    let out = qmeas(&["solve", "--set", &format!("potential={}", table.display())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_valid("solve", &r);
    assert!(r["closed_form"].is_null());
    let e: Vec<f64> = serde_json::from_value(r["energies"].clone()).unwrap();
    assert_eq!(e.len(), 5);
    assert!(e.windows(2).all(|w| w[0] < w[1]));
    // the wavefunction vanishes on the first wall nodes, one spacing past ±0.5
    let width = 1.0 + 3.0 / (n - 1) as f64;
    for (k, &energy) in e.iter().enumerate() {
        let exact = ((k + 1) as f64 * std::f64::consts::PI / width).powi(2) / 2.0;
        assert!(rel(energy, exact) < 1e-2, "level {k}: {energy} vs {exact}");
    }
}

#[test]
fn measure_matches_oscillator_closed_forms() {
    for (gamma, mean, dev) in [("1", 0.83333, 0.94281), ("0.5", 0.54167, 0.29463)] {
        let out = qmeas(&["measure", "--gamma", gamma]);
        assert_eq!(out.status.code(), Some(0));
        let r = report(&out);
        assert_valid("measure", &r);
        let pd_mean = r["pd"]["mean"].as_f64().unwrap();
        let pd_dev = r["pd"]["dev"].as_f64().unwrap();
        assert!(rel(pd_mean, mean) < 1e-3, "{gamma}: {pd_mean}");
        assert!(rel(pd_dev, dev) < 1e-3, "{gamma}: {pd_dev}");
        assert!(r["closed_form"]["rel_err_mean"].as_f64().unwrap() <= 1e-3);
        assert!(r["closed_form"]["rel_err_dev"].as_f64().unwrap() <= 1e-3);
    }
}

#[test]
fn ideal_measurement_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmeas(&["measure", "--gamma", "0", "--grid-n", "1024", "--out", dir.path().to_str().unwrap()]);
    let r = report(&out);
    for key in ["mean", "dev"] {
        assert!((r["pd"][key].as_f64().unwrap() - r["in"][key].as_f64().unwrap()).abs() <= 1e-8);
    }
    let profiles = std::fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
    let mut lines = profiles.lines();
    assert_eq!(lines.next(), Some("x,rho_in,j_in,rho_pd,j_pd"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - v[3]).abs() <= 1e-8 && (v[2] - v[4]).abs() <= 1e-8);
    }
}

#[test]
fn sweep_tracks_closed_forms_and_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmeas(&["sweep", "--gammas", "0.1,0.5,1,2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_valid("sweep", &r);
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(row["rel_err_mean"].as_f64().unwrap() <= 1e-3, "{row}");
        assert!(row["rel_err_dev"].as_f64().unwrap() <= 1e-3, "{row}");
    }
    let closed: Vec<f64> = rows.iter().map(|r| r["mean_pd_closed"].as_f64().unwrap()).collect();
    assert!(closed.windows(2).all(|w| w[0] < w[1]));

    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("gamma,mean_pd_numeric,dev_pd_numeric,mean_pd_closed,dev_pd_closed,rel_err_mean,rel_err_dev\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn zero_width_sweep_has_vanishing_deviation() {
    let r = report(&qmeas(&["sweep", "--gammas", "0"]));
    let row = &r["rows"][0];
    assert_eq!(row["dev_pd_closed"].as_f64(), Some(0.0));
    assert!(row["dev_pd_numeric"].as_f64().unwrap() <= 1e-8);
    assert!((row["mean_pd_numeric"].as_f64().unwrap() - 0.5).abs() <= 1e-4);
}

#[test]
fn eigenstate_sampling_is_confirmed_with_zero_spread() {
    let out = qmeas(&["confront", "--gamma", "0", "--n-samples", "1000", "--set", "truth=in", "--against", "in"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_valid("confront", &r);
    assert_eq!(r["exp"]["dev"].as_f64(), Some(0.0));
    assert_eq!(r["verdict"], "confirmed");
    assert_eq!(r["suggested_upgradings"].as_array().unwrap().len(), 0);
}

#[test]
fn blurred_truth_refutes_intrinsic_theory() {
    let out = qmeas(&["confront", "--gamma", "1", "--against", "in"]);
    assert_eq!(out.status.code(), Some(4));
    let r = report(&out);
    assert_valid("confront", &r);
    assert_eq!(r["verdict"], "refuted");
    assert_eq!(r["reference"], "in");
    assert!(r["pd"].is_null());
    assert_eq!(r["suggested_upgradings"], serde_json::json!(["u1", "u2", "u3"]));
}

#[test]
fn blurred_truth_confirms_predicted_theory() {
    let out = qmeas(&["confront", "--gamma", "1", "--against", "pd"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["verdict"], "confirmed");
    assert_eq!(r["reference"], "pd");
    assert!(rel(r["exp"]["mean"].as_f64().unwrap(), 0.83333) < 0.02);
}

#[test]
fn tight_tolerance_refutes_with_channel_in_play() {
    let out = qmeas(&["confront", "--gamma", "1", "--n-samples", "100", "--tolerance-mean", "1e-6", "--tolerance-dev", "1e-6"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(report(&out)["suggested_upgradings"], serde_json::json!(["u1", "u2"]));
}

#[test]
fn position_sampling_with_noise() {
    let out = qmeas(&["sample", "--set", "observable=position", "--set", "noise=0.5", "--seed", "11", "--gamma", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_valid("sample", &r);
    assert_eq!(r["target"], "position");
    // noise adds in quadrature to the intrinsic 1/√2 spread
    let expect = (0.5f64 + 0.25).sqrt();
    assert!(rel(r["exp"]["dev"].as_f64().unwrap(), expect) < 0.01);
}

#[test]
fn runs_are_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec!["sample".to_string(), "--gamma".into(), "0.5".into(), "--n-samples".into(), "5000".into(), "--seed".into(),
             "123".into(), "--set".into(), "noise=0.05".into(), "--out".into(), d.display().to_string()]
    };
    let run = |d: &Path| {
        let args = args(d);
        qmeas(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let (ra, rb) = (run(a.path()), run(b.path()));
    assert_eq!(ra.stdout, rb.stdout);
    for name in ["samples.csv", "distribution.csv", "sample.json"] {
        let fa = std::fs::read(a.path().join(name)).unwrap();
        let fb = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(fa, fb, "{name}");
    }
    let other = qmeas(&["sample", "--gamma", "0.5", "--n-samples", "5000", "--seed", "124", "--set", "noise=0.05"]);
    assert_ne!(report(&other)["exp"], report(&ra)["exp"]);
    assert_ne!(report(&other)["config_hash"], report(&ra)["config_hash"]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# oscillator run\ngamma = 0.5\ngrid_n = 1024\nseed = 9\n").unwrap();
    let from_file = report(&qmeas(&["measure", "--config", cfg.to_str().unwrap()]));
    assert_eq!(from_file["gamma"].as_f64(), Some(0.5));
    assert_eq!(from_file["seed"].as_u64(), Some(9));
    assert_eq!(from_file["grid"]["n"].as_u64(), Some(1024));
    let overridden = report(&qmeas(&["measure", "--config", cfg.to_str().unwrap(), "--gamma", "1"]));
    assert_eq!(overridden["gamma"].as_f64(), Some(1.0));
    assert_eq!(overridden["grid"]["n"].as_u64(), Some(1024));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "gamma = 1\nwidth = 3\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["measure", "--gamma", "-1"],
        vec!["measure", "--units", "cgs"],
        vec!["measure", "--config", bad.to_str().unwrap()],
        vec!["measure", "--config", "/nonexistent/run.cfg"],
        vec!["sample", "--set", "observable=position", "--set", "target=spectral"],
        vec!["sample", "--set", "observable=momentum"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = qmeas(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let e = error_payload(&out);
        assert_valid("error", &e);
    }
}

#[test]
fn small_spectral_basis_is_reported() {
    let out = qmeas(&["sample", "--gamma", "2", "--set", "k_max=2", "--n-samples", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_payload(&out)["error"]["code"], "k-max-too-small");
}

#[test]
fn describe_reports_intrinsic_moments() {
    let out = qmeas(&["describe", "--set", "observable=position", "--set", "state=1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_valid("describe", &r);
    // first excited state: <x> = 0, σ(x) = sqrt(3/2)
    assert!(r["in"]["mean"].as_f64().unwrap().abs() < 1e-8);
    assert!(rel(r["in"]["dev"].as_f64().unwrap(), 1.5f64.sqrt()) < 1e-4);
    assert!(rel(r["energy"].as_f64().unwrap(), 1.5) < 1e-4);
}

#[test]
fn fallacy_table_follows_one_over_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmeas(&[
        "fallacy", "--gamma", "1", "--sizes", "1,10,100", "--trials", "2000", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_valid("fallacy", &r);
    for row in r["rows"].as_array().unwrap() {
        let scaled = row["scaled_variance"].as_f64().unwrap();
        let pop = row["population_variance"].as_f64().unwrap();
        assert!(rel(scaled, pop) < 0.15, "{row}");
    }
    let csv = std::fs::read_to_string(dir.path().join("fallacy.csv")).unwrap();
    assert!(csv.starts_with("n,estimator_variance,scaled_variance,population_variance\n"));
}

#[test]
fn si_units_match_scaled_closed_forms() {
    // electron at ω = 1e15 rad/s; channel width equal to the oscillator length
    let sigma = (1.054_571_817e-34f64 / (9.109_383_701_5e-31 * 1e15)).sqrt();
    let out = qmeas(&["measure", "--units", "si", "--gamma", &sigma.to_string()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["closed_form"]["rel_err_mean"].as_f64().unwrap() <= 1e-3);
    assert!(r["closed_form"]["rel_err_dev"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn kernel_file_drives_the_channel() {
    let dir = tempfile::tempdir().unwrap();
    let n = 201;
    let xs: Vec<f64> = (0..n).map(|i| -8.0 + 16.0 * i as f64 / (n - 1) as f64).collect();
    let mut text = String::from("x");
    for x in &xs {
        text.push_str(&format!(",{x}"));
    }
    text.push('\n');
    for &x in &xs {
        text.push_str(&x.to_string());
        for &y in &xs {
            text.push_str(&format!(",{}", (-(x - y) * (x - y) / 2.0).exp()));
        }
        text.push('\n');
    }
    let kernel = dir.path().join("kernel.csv");
    std::fs::write(&kernel, text).unwrap();
    let out = qmeas(&["measure", "--set", &format!("kernel_file={}", kernel.display())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["closed_form"].is_null());
    assert_eq!(r["grid"]["n"].as_u64(), Some(201));
    // unit-width blur, coarse grid
    assert!(rel(r["pd"]["mean"].as_f64().unwrap(), 0.83333) < 1e-2);
}
