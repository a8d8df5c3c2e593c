use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carleson-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("CARLESON_LAB_CACHE")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

const MEASURE: &str = r#"{"atoms":[{"z":[0.5,0,0.3,0.1],"m":1.0},{"z":[0.0,0.9,0.1,0],"m":0.5}]}"#;

#[test]
fn slice_vacuous_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["repro", "slice-vacuous", "--n", "2", "--depth", "8"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["pass"], true);
    let split = r["steps"][0]["values"]["max_split"].as_f64().unwrap();
    assert_eq!(split, 0.0);
    assert_eq!(r["depth"], 8);
}

#[test]
fn ring_domain_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["repro", "ring-domain", "--L", "2", "--nmax", "20", "--out", "runs"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("runs/ring-domain.csv")).unwrap();
    assert_eq!(csv.lines().count(), 42);
    assert!(csv.starts_with("n,h2_formula"));
    assert!(dir.path().join("runs/ring-domain.json").exists());
}

#[test]
fn power_measure_smoke_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["repro", "power-measure", "--rho", "-0.75", "--depths", "8..12", "--scale", "0", "--depth", "12"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    for row in r["table"]["rows"].as_array().unwrap() {
        assert!(row.as_array().unwrap()[1..].iter().all(|x| x.as_f64() == Some(0.0)));
    }
}

#[test]
fn usage_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["repro", "ring-domain", "--L", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.L"));
    let o = lab(&["repro", "ring-domain", "--bogus", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.bogus"));
    assert_eq!(lab(&["repro", "nope"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn resource_refusals() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["repro", "power-measure", "--max-nodes", "10"], dir.path()).status.code(), Some(3));
    assert_eq!(lab(&["--max-nodes", "1000", "build-tree", "--n", "2", "--depth", "12"], dir.path()).status.code(), Some(3));
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["repro", "two-weight-suite", "--trees", "20", "--k-bound", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["pass"], false);
}

#[test]
fn compare_self_and_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    assert!(lab(&["--seed", "1", "--out", "a", "repro", "ring-domain"], dir.path()).status.success());
    assert!(lab(&["--seed", "2", "--out", "b", "repro", "ring-domain"], dir.path()).status.success());
    let same = lab(&["compare", "a/ring-domain.json", "a/ring-domain.json", "--tol", "0"], dir.path());
    assert_eq!(same.status.code(), Some(0));
    assert_eq!(stdout_json(&same)["entries"].as_array().unwrap().len(), 0);
    let diff = lab(&["compare", "a/ring-domain.json", "b/ring-domain.json", "--tol", "0"], dir.path());
    assert_eq!(diff.status.code(), Some(1));
}

#[test]
fn reruns_are_identical_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_carleson-lab"))
            .args(["--out", out, "repro", "cantor", "--measures", "4"])
            .current_dir(dir.path())
            .env("CARLESON_LAB_CACHE", dir.path().join("cache"))
            .output()
            .unwrap()
    };
    let first = run("x");
    let second = run("y");
    assert!(first.status.success() && second.status.success());
    assert!(String::from_utf8_lossy(&second.stderr).contains("(cached)"));
    let strip = |p: &str| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(p)).unwrap()).unwrap();
        v["wall_clock_s"] = 0.into();
        v
    };
    assert_eq!(strip("x/cantor.json"), strip("y/cantor.json"));
    let fresh = lab(&["repro", "cantor", "--measures", "4", "--no-cache"], dir.path());
    let mut a = stdout_json(&fresh);
    a["wall_clock_s"] = 0.into();
    assert_eq!(a, strip("x/cantor.json"));
}

#[test]
fn tree_check_norm_oracle_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mu.json"), MEASURE).unwrap();
    let o = lab(&["--out", "o", "build-tree", "--n", "2", "--depth", "6", "--measure", "mu.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = stdout_json(&lab(&["discretize", "--measure", "mu.json", "--tree", "o/tree.json"], dir.path()));
    assert!((d["total"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    let c = lab(&["check", "--condition", "simple", "--measure", "mu.json", "--tree", "o/tree.json", "--bound", "1e9"], dir.path());
    assert!(c.status.success());
    let simple = stdout_json(&c)["constant"].as_f64().unwrap();
    let t = stdout_json(&lab(&["check", "--measure", "mu.json", "--tree", "o/tree.json"], dir.path()));
    assert!(simple <= t["constant"].as_f64().unwrap());
    let tight = lab(&["check", "--condition", "simple", "--measure", "mu.json", "--tree", "o/tree.json", "--bound", "0"], dir.path());
    assert_eq!(tight.status.code(), Some(1));
    let dense = stdout_json(&lab(&["norm", "--operator", "tbig", "--measure", "mu.json", "--tree", "o/tree.json"], dir.path()));
    let power = stdout_json(&lab(
        &["norm", "--operator", "tbig", "--measure", "mu.json", "--tree", "o/tree.json", "--method", "power"],
        dir.path(),
    ));
    let (x, y) = (dense["value"].as_f64().unwrap(), power["value"].as_f64().unwrap());
    assert!((x - y).abs() < 1e-6 * x, "{x} vs {y}");
    let o = stdout_json(&lab(&["--seed", "5", "oracle", "--kernel", "da", "--measure", "mu.json"], dir.path()));
    assert!(o["value"].as_f64().unwrap() > 0.0);
    assert!(o["residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(o["seed"], 5);
    assert_eq!(o["method"], "dense-hermitian");
    assert_eq!(lab(&["oracle", "--kernel", "ring:2", "--measure", "mu.json"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["oracle", "--kernel", "bs:0.25", "--measure", "missing.json"], dir.path()).status.code(), Some(2));
}
