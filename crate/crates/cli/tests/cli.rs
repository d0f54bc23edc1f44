use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
schema_version = 1

[molecule]
name = "benzonitrile"

[block]
m = 0
k_parity = "even"
sigma_parity = "even"
initial_state = "0_00_0"

[dc]
es_vcm = 300

[pulse]
i0_wcm2 = 7e11
tau_ns = 0.2

[numerics]
j_max = 8
n_track = 4
sample_count = 5
"#;

const SCAN: &str = r#"
schema_version = 1

[block]
m = 3
k_parity = "even"

[dc]
es_vcm = 300

[pulse]
i0_wcm2 = 7e11
tau_ns = 2

[numerics]
j_max = 8
n_track = 5

[scan]
i_min_wcm2 = 1e9
i_max_wcm2 = 7e11
points = 40
"#;

fn rotodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotodyn"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_an_io_error() {
    let o = rotodyn(&["propagate", "-c", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nonexistent/run.toml"));
}

#[test]
fn validate_reports_invariant_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let o = rotodyn(&["validate", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("0_00_0") && text.contains("schema_version = 1"));
    assert_eq!(
        fs::read_dir(dir.path()).unwrap().count(),
        1,
        "validate must not write files"
    );

    let o = rotodyn(&["validate", "-c", &cfg, "-s", "pulse.tau_ns=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("PulseSpec"), "{}", stderr(&o));
}

#[test]
fn propagate_writes_trajectory_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("out");
    let o = rotodyn(&[
        "propagate",
        "-c",
        &cfg,
        "-o",
        out.to_str().unwrap(),
        "--step-log",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t_ns,I_Wcm2,Es_Vcm,cos_theta,norm,energy_MHz,pop_0_00_0,pop_1_01_0,pop_2_02_0,pop_3_03_0"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[4].starts_with("0,"));

    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("t_ns,krylov_order,error_estimate\n"));

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    for key in ["started", "finished"] {
        let t = meta[key].as_str().unwrap();
        assert!(chrono::DateTime::parse_from_rfc3339(t).is_ok(), "{t}");
    }
    assert_eq!(meta["subcommand"], "propagate");
    assert_eq!(meta["config"]["pulse"]["tau_ns"], 0.2);
    assert!(meta["results"]["cos_theta_final"].as_f64().unwrap() > 0.0);

    let echo = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(echo.contains("dt_fs") && echo.contains("t_start_ns"));
    // The echo is itself a valid configuration.
    let o = rotodyn(&[
        "validate",
        "-c",
        out.join("effective_config.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn single_thread_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = rotodyn(&[
            "--threads",
            "1",
            "propagate",
            "-c",
            &cfg,
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(b.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn step_rejection_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let o = rotodyn(&[
        "propagate",
        "-c",
        &cfg,
        "-o",
        dir.path().join("out").to_str().unwrap(),
        "-s",
        "numerics.min_krylov=2",
        "-s",
        "numerics.max_krylov=2",
        "-s",
        "numerics.dt_fs=500",
        "-s",
        "numerics.step_error_tol=1e-14",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("rejected"));
}

#[test]
fn spectrum_writes_energies_and_crossings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", SCAN);
    let out = dir.path().join("out");
    let o = rotodyn(&["spectrum", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let energies = fs::read_to_string(out.join("energies.csv")).unwrap();
    assert!(energies.starts_with("I_Wcm2,Es_Vcm,E_track0_MHz,E_track1_MHz,"));
    assert_eq!(energies.lines().count(), 41);
    let crossings = fs::read_to_string(out.join("crossings.csv")).unwrap();
    assert!(crossings.starts_with("track_i,track_j,I_star,gap_MHz\n"));
    assert!(crossings.lines().count() > 1, "{crossings}");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["results"]["labels"][0], "3_03_3");
}

#[test]
fn crossings_writes_eta_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", SCAN);
    let out = dir.path().join("out");
    let o = rotodyn(&["crossings", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let eta = fs::read_to_string(out.join("eta.csv")).unwrap();
    assert!(eta.starts_with("track_i,track_j,label_i,label_j,eta_max,I_at_max_Wcm2\n"));
    assert_eq!(eta.lines().count(), 1 + 5 * 4 / 2);
    assert!(eta
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0,1,3_03_3,4_04_3,"));
}

#[test]
fn sweep_writes_one_row_and_file_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[sweep]\ntau_ns = [0.1, 0.2]\nes_vcm = [300, 600]\ntop_k = 2\n");
    let cfg = write_config(dir.path(), "sweep.toml", &text);
    let out = dir.path().join("out");
    let o = rotodyn(&[
        "--threads",
        "2",
        "sweep",
        "-c",
        &cfg,
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "run,Es_Vcm,tau_ns,status,cos_theta,steps,label_1,pop_1,label_2,pop_2"
    );
    assert_eq!(lines.len(), 5);
    assert!(
        lines[3].starts_with("2,6.00000000000e2,1.00000000000e-1,ok,"),
        "{}",
        lines[3]
    );
    for i in 0..4 {
        assert!(out.join(format!("runs/run_{i:03}.csv")).exists());
    }
}
