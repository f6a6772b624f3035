use std::path::PathBuf;
use std::process::{Command, Output};

use levy_passage::io::{table_to_grid, Table};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_levy-passage"));
    c.env("LEVY_PASSAGE_THREADS", "1");
    c
}

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join(format!("../../models/{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn scale_table_starts_at_zero() {
    let o = run(&["scale", "--model", &model("bm"), "--delta", "0.5", "--resolution", "16"]);
    assert!(o.status.success());
    let (manifest, t) = Table::parse(&stdout(&o)).unwrap();
    let manifest = manifest.unwrap();
    assert_eq!(manifest.command, "scale");
    assert_eq!(manifest.model_digest.unwrap().len(), 64);
    assert_eq!(t.columns, ["x", "W", "Wp", "Z"]);
    assert_eq!(t.column("W").unwrap()[0], 0.0);
    assert_eq!(t.column("Z").unwrap()[0], 1.0);
    let w = table_to_grid(&t, "x", "W").unwrap();
    assert_eq!(w.len(), 65);
}

#[test]
fn first_passage_routes_agree() {
    let o = run(&["first-passage", "--model", &model("bm"), "--delta", "0.5", "--b", "1"]);
    assert!(o.status.success());
    let (_, t) = Table::parse(&stdout(&o)).unwrap();
    let phi = t.column("phi").unwrap();
    assert_eq!(phi.len(), 3);
    let exact = (1.0 - 2f64.sqrt()).exp();
    assert!(phi.iter().all(|p| (p - exact).abs() < 1e-3), "{phi:?}");
}

#[test]
fn b_grid_forms() {
    let o = run(&["first-passage", "--model", &model("ph"), "--delta", "0.5,1", "--b", "0.5:2:4", "--route", "pk"]);
    assert!(o.status.success());
    let (_, t) = Table::parse(&stdout(&o)).unwrap();
    assert_eq!(t.rows.len(), 8);
    let phi = t.column("phi").unwrap();
    assert!(phi.iter().all(|p| *p > 0.0 && *p < 1.0));
}

#[test]
fn usage_errors_exit_2() {
    let bad = std::env::temp_dir().join("levy_passage_bad_model.json");
    std::fs::write(&bad, r#"{"kind":"brownian_drift","mu":1,"sigma":-1}"#).unwrap();
    assert_eq!(run(&["model", "--model", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["scale", "--model", &model("bm"), "--delta", "0.5", "--route", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["scale", "--model", "/nonexistent/model.json", "--delta", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["scale", "--model", &model("bm"), "--delta=-1"]).status.code(), Some(2));
}

#[test]
fn unsupported_route_exits_1() {
    let o = run(&["scale", "--model", &model("perturbed_gamma"), "--delta", "0.5", "--route", "closed"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn out_file_is_written_whole() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fp.csv");
    let o = run(&["first-passage", "--model", &model("bm"), "--delta", "0.5", "--b", "1", "--route", "closed", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# {"));
    let (_, t) = Table::parse(&text).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--model", &model("bm"), "--target", "first", "--delta", "0.5", "--paths", "2000", "--seed", "3"];
    let a: serde_json::Value = serde_json::from_slice(&run(&args).stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&run(&args).stdout).unwrap();
    assert_eq!(a["estimate"], b["estimate"]);
    assert_eq!(a["manifest"]["seed"], 3);
    let est = a["estimate"].as_f64().unwrap();
    let se = a["se"].as_f64().unwrap();
    assert!((est - (1.0 - 2f64.sqrt()).exp()).abs() < 4.0 * se);
}

#[test]
fn model_summary_reports_escape_rate() {
    let o = run(&["model", "--model", &model("ph")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "perturbed_compound_poisson_ph");
    assert!((v["mean"].as_f64().unwrap() - 0.725).abs() < 1e-12);
    assert!(v["rho0"].as_f64().unwrap() > 0.0);
}

#[test]
fn maintenance_reset_policy_is_geometric() {
    let policy = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/policy_reset.json");
    let o = run(&[
        "maintenance",
        "--model",
        &model("bm"),
        "--policy",
        policy.to_str().unwrap(),
        "--what",
        "joint",
        "--i-max",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, t) = Table::parse(&stdout(&o)).unwrap();
    let p = t.column("p_i").unwrap();
    let q = p[0];
    for (i, v) in p.iter().enumerate() {
        assert!((v - q * (1.0 - q).powi(i as i32)).abs() < 1e-12);
    }
}
