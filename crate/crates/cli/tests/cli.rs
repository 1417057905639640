use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn heisen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heisen")).args(args).output().expect("spawn heisen")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn verify(experiment: &str, config: Option<&str>, out: &Path) -> Output {
    let dir = out.to_str().unwrap();
    match config {
        Some(c) => {
            let path = out.with_extension("json");
            fs::write(&path, c).unwrap();
            heisen(&["verify", experiment, "--config", path.to_str().unwrap(), "--out", dir])
        }
        None => heisen(&["verify", experiment, "--out", dir]),
    }
}

#[test]
fn kernel_anchor_at_identity() {
    let o = heisen(&["kernel", "--free", "--s", "1", "--point", "0,0,0"]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v * 64.0 - 1.0).abs() < 1e-6, "{v}");
}

#[test]
fn rho_of_constant_potential() {
    let o = heisen(&["rho", "--potential", r#"{"kind":"Constant","c":1.0}"#, "--point", "0,0,0"]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    let exact = (std::f64::consts::PI.powi(2) / 8.0).powf(-0.5);
    assert!((v / exact - 1.0).abs() < 1e-6, "{v}");
}

#[test]
fn passing_experiment_writes_report_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mp");
    let o = verify("max-principle", None, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["config"]["experiment"], "max-principle");
    let tables: Vec<_> = fs::read_dir(out.join("tables")).unwrap().collect();
    assert!(!tables.is_empty());
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn negative_control_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = verify("max-principle-negative", None, &tmp.path().join("neg"));
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = verify("max-principle", Some("{not json"), &tmp.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    let o = verify("max-principle", Some(r#"{"tolerances": {"theorem": -1}}"#), &tmp.path().join("b"));
    assert_eq!(o.status.code(), Some(2));
    let o = verify("no-such-experiment", None, &tmp.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_errors_exit_three() {
    let o = heisen(&["kernel", "--free", "--s=-1", "--point", "0,0,0"]);
    assert_eq!(o.status.code(), Some(3));
}
