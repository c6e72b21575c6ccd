use std::path::Path;
use std::process::{Command, Output};

fn beamctl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamctl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BEAMCTL_PRECISION_CEILING")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn spectrum_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["spectrum", "--rho", "1", "--modes", "5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("spectrum.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,regime,lambda_plus_re,lambda_plus_im,lambda_minus_re,lambda_minus_im");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("1,underdamped,-0.5,0.866025403784438"));
    assert!(!csv.contains('\r'));
}

#[test]
fn spectrum_reports_collisions() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["spectrum", "--rho", "2.5", "--modes", "4"], dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("lambda+_2 = lambda-_1") && stdout.contains("lambda+_4 = lambda-_2"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("spectrum.json"))).unwrap();
    assert_eq!(json["collisions"]["pairs"], serde_json::json!([[2, 1], [4, 2]]));
    assert_eq!(json["branch_ratio"], "2");
}

#[test]
fn invalid_rho_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["spectrum", "--rho", "0"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho"));
}

#[test]
fn synthesize_writes_report_and_control() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["synthesize", "--rho", "1", "--modes", "3", "--data", "mode1", "--samples", "11"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("synthesis.json"))).unwrap();
    assert_eq!(json["status"], "ok");
    assert_eq!(json["report"]["n_constraints"], 8);
    let csv = read(&dir.path().join("control.csv"));
    assert!(csv.starts_with("t,f,df,d2f\n0.0,0.0,0.0,"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn synthesize_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["synthesize", "--rho", "3/2", "--modes", "3", "--data", "random-seeded:4"];
    assert_eq!(code(&beamctl(&args, a.path())), 0);
    assert_eq!(code(&beamctl(&args, b.path())), 0);
    for f in ["synthesis.json", "control.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn neumann_even_modes_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[beam]\nboundary = \"neumann\"\nrho = 1\nmodes = 4\n[data]\ntriples = [[1, 1.0, 0.0], [2, 0.5, 0.0]]\n",
    )
    .unwrap();
    let o = beamctl(&["synthesize", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("synthesis.json"))).unwrap();
    assert_eq!(json["cause_kind"], "UncontrollableMode");
}

#[test]
fn rank_deficiency_without_autoscale_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synthesize", "--rho", "1", "--modes", "6", "--horizon", "0.25", "--precision-bits", "53", "--no-autoscale"];
    let o = beamctl(&args, dir.path());
    assert_eq!(code(&o), 4);
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("synthesis.json"))).unwrap();
    assert_eq!(json["cause_kind"], "NumericalRankDeficiency");
    assert_eq!(json["autoscale_trace"], serde_json::json!([53]));
}

#[test]
fn verify_controlled_and_resonant() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["verify", "--rho", "1", "--modes", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = read(&dir.path().join("experiment.jsonl"));
    assert_eq!(line.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["verdict"], "Controlled");

    let o = beamctl(&["verify", "--rho", "5/2", "--modes", "4", "--data", "random-seeded:1"], dir.path());
    assert_eq!(code(&o), 3);
    let v: serde_json::Value = serde_json::from_str(read(&dir.path().join("experiment.jsonl")).trim()).unwrap();
    assert_eq!(v["cause_kind"], "ResonanceDefect");
}

#[test]
fn condensation_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["condensation", "--ratio", "sqrt:2", "--n-max", "50"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("condensation.csv"));
    assert!(csv.starts_with("n,branch,per_n_value,running_sup\n"));
    assert_eq!(csv.lines().count(), 101);
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("condensation.json"))).unwrap();
    assert!(json["c_estimate"].as_f64().unwrap() < 0.1);

    let o = beamctl(&["condensation", "--ratio", "5/2"], dir.path());
    assert_eq!(code(&o), 3);
    // rho = 3 gives the irrational ratio (3 + sqrt 5)/2
    assert_eq!(code(&beamctl(&["condensation", "--rho", "3"], dir.path())), 0);
    // underdamped damping has no branch ratio
    assert_eq!(code(&beamctl(&["condensation", "--rho", "1"], dir.path())), 2);
}

#[test]
fn cost_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamctl(&["cost-sweep", "--rho", "1", "--modes", "3", "--horizons", "0.5,1,2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("sweep.csv"));
    assert!(csv.starts_with("T,cost,residual,verdict\n0.5,"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("sweep_fit.json"))).unwrap();
    assert!(json["fit"]["slope"].as_f64().unwrap() > 0.0);
    assert_eq!(json["monotone"], true);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[beam]\nrho = 1\nmode = 3\n").unwrap();
    let o = beamctl(&["spectrum", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"));
}
