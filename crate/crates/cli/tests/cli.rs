use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn out_dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn canard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_canard"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_default_passes() {
    let d = out_dir("validate_default");
    let o = canard(&d, &["validate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(d.join("validate.json"));
    assert_eq!(r["tool"], "canard");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert!(r["result"]["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
}

#[test]
fn validate_empty_curve_fails() {
    let d = out_dir("validate_k");
    let cfg = write_config(&d, r#"{"system": {"k": 2.5}}"#);
    let o = canard(&d, &["validate", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    let r = json(d.join("validate.json"));
    let text = r["result"]["conditions"].to_string();
    assert!(text.contains("empty"), "{text}");
}

#[test]
fn usage_errors_exit_two() {
    let d = out_dir("usage");
    let bad = write_config(&d, "{bad");
    let o = canard(&d, &["validate", "--config", &bad]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    let unknown = write_config(&d, r#"{"sytem": {}}"#);
    assert_eq!(code(&canard(&d, &["validate", "--config", &unknown])), 2);
    assert_eq!(code(&canard(&d, &["frobnicate"])), 2);
    assert_eq!(code(&canard(&d, &["graph", "--eps", "-0.1"])), 2);
    assert_eq!(code(&canard(&d, &["verify", "--subset", "nonsense"])), 2);
    assert_eq!(code(&canard(&d, &["windows", "--n-min", "9", "--n-max", "5"])), 2);
}

#[test]
fn numerical_failure_exits_three() {
    let d = out_dir("numerical");
    let cfg = write_config(&d, r#"{"integrator": {"max_steps": 3}}"#);
    assert_eq!(code(&canard(&d, &["graph", "--eps", "0.1", "--config", &cfg])), 3);
}

#[test]
fn graph_output() {
    let d = out_dir("graph");
    let o = canard(&d, &["graph", "--eps", "0.15", "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(d.join("graph.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x_lifted", "Px_lifted", "logJ"]);
    let rows: Vec<[f64; 3]> = rd.deserialize().map(|r| r.unwrap()).collect();
    assert!(rows.len() > 100);
    for w in rows.windows(2) {
        assert!(w[1][1] >= w[0][1]);
    }
    assert!(rows.last().unwrap()[0] - rows[0][0] < 2.0 * PI);

    let r = json(d.join("graph.json"));
    let lm = &r["result"]["landmarks"];
    for k in ["a_minus", "a_plus", "b_minus", "b_plus", "e_minus", "e_plus"] {
        assert!(lm[k]["x"].is_f64(), "{k}");
    }
    // samples outside D+ land in D-
    let s = &lm["segments"];
    let f = |k: &str| s[k].as_f64().unwrap();
    let m = |v: f64| v.rem_euclid(2.0 * PI);
    for [x, px, _] in rows {
        if m(x - f("p_plus")) > f("width_plus") + 1e-9 {
            assert!(m(px - f("p_minus")) <= f("width_minus") + 1e-9, "x = {x}");
        }
    }
}

#[test]
fn graph_rerun_is_byte_identical() {
    let (a, b) = (out_dir("rerun_a"), out_dir("rerun_b"));
    canard(&a, &["graph", "--eps", "0.2"]);
    canard(&b, &["graph", "--eps", "0.2"]);
    for f in ["graph.csv", "graph.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn windows_report() {
    let (a, b) = (out_dir("windows_a"), out_dir("windows_b"));
    let o = canard(&a, &["windows", "--n-min", "5", "--n-max", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    canard(&b, &["windows", "--n-min", "5", "--n-max", "6"]);
    assert_eq!(
        fs::read(a.join("windows.json")).unwrap(),
        fs::read(b.join("windows.json")).unwrap()
    );

    let r = json(a.join("windows.json"));
    let ws = r["result"]["windows"].as_array().unwrap();
    assert_eq!(ws.len(), 2);
    let (w5, w6) = (&ws[0], &ws[1]);
    assert!(w6["beta"].as_f64().unwrap() < w5["alpha"].as_f64().unwrap());
    for w in ws {
        let census = w["census"].as_array().unwrap();
        assert!(!census.is_empty());
        assert!(census.iter().all(|c| c["regime"].is_u64()));
    }
    assert_eq!(r["result"]["scaling"]["insufficient_data"], true);
    let mut rd = csv::Reader::from_path(a.join("scaling.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["n", "alpha", "beta", "width"]);
    assert_eq!(rd.records().count(), 2);
}

#[test]
fn verify_subset_and_tolerance() {
    let d = out_dir("verify");
    let o = canard(&d, &["verify", "--subset", "balance,monotonicity"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(d.join("verify.json"));
    let names: Vec<&str> = r["result"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["monotonicity", "balance"]);

    let o = canard(&d, &["verify", "--subset", "balance", "--tol-scale", "1e-3"]);
    assert!([0, 1].contains(&code(&o)));
    let r = json(d.join("verify.json"));
    assert_eq!(r["config"]["system"]["tolerances"]["quad"].as_f64().unwrap(), 1e-13);
}

#[test]
fn balance_report() {
    let d = out_dir("balance");
    let o = canard(&d, &["balance", "--eps", "0.08,0.04"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(d.join("balance.json"));
    assert!(r["result"]["balance"]["y_balance"].as_f64().unwrap().abs() < 1e-8);
    assert_eq!(r["result"]["derivative"]["rows"].as_array().unwrap().len(), 2);
    assert!(r["result"]["slow_manifold"]["q"].is_f64());
}

#[test]
fn sweep_straddles_maximal_canard() {
    let d = out_dir("sweep");
    let o = canard(&d, &["sweep", "--eps", "0.05", "--samples", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(d.join("jumps.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x0", "y_plus", "direction"]);
    let recs: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(recs.len(), 10);
    let dirs: Vec<&str> = recs.iter().map(|r| &r[2]).filter(|s| !s.is_empty()).collect();
    assert_eq!(dirs.first(), Some(&"down"));
    assert_eq!(dirs.last(), Some(&"up"));
    assert!(x0_sorted(&recs));
}

fn x0_sorted(recs: &[csv::StringRecord]) -> bool {
    let xs: Vec<f64> = recs.iter().map(|r| r[0].parse().unwrap()).collect();
    xs.windows(2).all(|w| w[1] >= w[0])
}
