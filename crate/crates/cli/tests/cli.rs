use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn abphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abphase"))
        .args(args)
        .env("ABPHASE_FIXTURES", fixtures())
        .output()
        .expect("spawn abphase")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fig2_with(edit: impl Fn(String) -> String) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("fig2_infinite_solenoid.toml")).unwrap();
    let path = dir.path().join("case.toml");
    std::fs::write(&path, edit(text)).unwrap();
    (dir, path)
}

#[test]
fn lists_shipped_fixtures() {
    let o = abphase(&["list-fixtures"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for name in [
        "fig2_infinite_solenoid",
        "fig3_toroid_threading",
        "fig3_toroid_nonthreading",
        "fig4_finite_solenoid_shells",
        "fig5_charge_pair",
        "energy_identity",
        "finite_solenoid_sweep",
    ] {
        assert!(out.contains(name), "{name} missing from\n{out}");
    }
}

#[test]
fn fixture_dir_from_environment() {
    let (dir, _) = fig2_with(|t| t);
    let o = Command::new(env!("CARGO_BIN_EXE_abphase"))
        .arg("list-fixtures")
        .env("ABPHASE_FIXTURES", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(stdout(&o).starts_with("case"));
}

#[test]
fn validate_reports_field_and_position() {
    assert!(abphase(&["validate", "fig2_infinite_solenoid"]).status.success());

    let (_d, bad) = fig2_with(|t| t.replace("radius = 0.1", "radius = -0.1"));
    let o = abphase(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radius"), "{}", stderr(&o));

    let (_d, unknown) = fig2_with(|t| t.replace("units = \"natural\"", "units = \"natural\"\nspin = 1"));
    let o = abphase(&["validate", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("spin") && err.contains("line 5"), "{err}");
}

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let o = abphase(&["run", "fig2_infinite_solenoid", "--csv", csv.to_str().unwrap(), "--diagnostics"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("self term"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scenario,method,phase_rad,phase_normalized,err_estimate,n_evals,wall_ms,converged");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[0], "fig2_infinite_solenoid");
        assert_eq!(r[7], "true");
        let normalized: f64 = r[3].parse().unwrap();
        assert!((normalized - 1.0).abs() < 1e-4, "{r:?}");
    }
}

#[test]
fn nonconverged_method_sets_exit_code() {
    // Orbit inside the solenoid: the overlap engine refuses, the others run.
    let (_d, path) = fig2_with(|t| t.replace("radius = 1.0", "radius = 0.05"));
    let o = abphase(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("NO"));

    let (_d, path) = fig2_with(|t| t.replace("\"field-overlap\", ", ""));
    let o = abphase(&["run", path.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn unit_flag_and_tolerance_override() {
    let o = abphase(&["run", "fig2_infinite_solenoid", "--units", "si", "--rel-tol", "1e-5", "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Si units"), "{out}");
    assert!(out.lines().filter(|l| l.starts_with("wilson-loop")).any(|l| l.contains("1.0000000000")));
}

#[test]
fn sweep_appends_convergence() {
    let (dir, path) = fig2_with(|t| {
        t.replace("\"field-overlap\", \"axis-reduction\"", "\"axis-reduction\"")
            + "\n[sweep]\nparameter = \"trajectory.path.radius\"\nvalues = [0.5, 1.0, 2.0]\n"
    });
    let csv = dir.path().join("sweep.csv");
    let o = abphase(&["sweep", path.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("[trajectory.path.radius=")).count(), 9);
    assert!(text.contains("# convergence wilson-loop: deviation_monotone=true"));

    let o = abphase(&["sweep", "fig2_infinite_solenoid"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_is_an_error() {
    let o = abphase(&["run", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_scenario"));
}
