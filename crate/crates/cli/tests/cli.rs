use std::path::Path;
use std::process::{Command, Output};

fn ile(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ile"))
        .args(args)
        .current_dir(dir)
        .env_remove("ILE_JOBS")
        .output()
        .expect("run ile")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const RATES: &str = r#"
version = 1
seed = 11

[task]
kind = "smooth_binary"
support = 60
amplitude = 0.4
frequency = 1.5

[kernel]
family = "gaussian"
sigma = 0.3

[schedule]
r = 0.0
gamma = 1.0
learner = { kind = "ridge" }

[rates]
n_grid = [20, 40, 80, 160]
repetitions = 10
"#;

const SPHERE: &str = r#"
version = 1
seed = 4

[task]
kind = "sphere"
dim = 2
concentration = 50.0

[kernel]
family = "gaussian"
sigma = 0.8

[algorithm]
kind = "ridge"
lambda = 0.01

[fit]
n = 60

[eval]
n_train = 60
n_test = 100

[predict]
model = "out/model.json"
inputs = "x.csv"

[diag]
n = 40
lambda_min = 0.001
lambda_max = 1.0
points = 4
"#;

#[test]
fn verify_default_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ile(dir.path(), &["verify"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}\n{}", String::from_utf8_lossy(&o.stderr));
    assert!(text.contains("0 comparison-inequality violations"), "{text}");
    assert!(text.contains("verify: 11 of 11 suites passed"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/verify.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["passed"], true);
}

#[test]
fn verify_selected_suites_and_sizes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("v.toml"),
        "version = 1\n[verify]\nsuites = [\"comparison\", \"filters\"]\ncomparison_cases = 20\nfilter_grid = 50\n",
    )
    .unwrap();
    let o = ile(dir.path(), &["verify", "--config", "v.toml"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("(20 cases, 0 failures)"));
    assert!(stdout(&o).contains("verify: 2 of 2 suites passed"));
}

#[test]
fn rates_echo_schedule_and_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("r.toml"), RATES).unwrap();
    let a = ile(dir.path(), &["rates", "--config", "r.toml", "--out", "a", "--jobs", "1"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(stdout(&a).contains("lambda_n = n^(-1/2)"), "{}", stdout(&a));
    let b = Command::new(env!("CARGO_BIN_EXE_ile"))
        .args(["rates", "--config", "r.toml", "--out", "b"])
        .current_dir(dir.path())
        .env("ILE_JOBS", "3")
        .output()
        .unwrap();
    assert!(b.status.success());
    for f in ["rates.csv", "rates_points.csv", "rates_summary.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/rates.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,rep,excess,lambda,seed"));
    assert_eq!(lines.count(), 40);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/rates_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["schedule"], "lambda_n = n^(-1/2)");
    // A different seed changes the sample and therefore the table.
    let c = ile(dir.path(), &["rates", "--config", "r.toml", "--out", "c", "--seed", "12"]);
    assert!(c.status.success());
    assert_ne!(std::fs::read(dir.path().join("c/rates.csv")).unwrap(), csv.into_bytes());
}

#[test]
fn malformed_config_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = RATES.replace("gamma = 1.0", "gamma = 2.0");
    std::fs::write(dir.path().join("bad.toml"), &bad).unwrap();
    let o = ile(dir.path(), &["rates", "--config", "bad.toml", "--out", "o"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    let line = bad.lines().position(|l| l.starts_with("gamma")).unwrap() + 1;
    assert!(err.contains(&format!("bad.toml:{line}: schedule gamma")), "{err}");
    assert!(!dir.path().join("o").exists());

    std::fs::write(dir.path().join("syntax.toml"), "version = 1\n[task\n").unwrap();
    let o = ile(dir.path(), &["rates", "--config", "syntax.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!dir.path().join("o").exists());

    std::fs::write(dir.path().join("v2.toml"), RATES.replace("version = 1", "version = 2")).unwrap();
    let o = ile(dir.path(), &["rates", "--config", "v2.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(!dir.path().join("o").exists());
}

#[test]
fn fit_predict_eval_diag_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), SPHERE).unwrap();
    std::fs::write(dir.path().join("x.csv"), "x0,x1\n0.1,0.2\n-0.4,0.9\n0.0,0.0\n").unwrap();
    let run = |cmd: &str| {
        let o = ile(dir.path(), &[cmd, "--config", "s.toml"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run("fit");
    run("predict");
    let preds = std::fs::read_to_string(dir.path().join("out/predictions.csv")).unwrap();
    let mut r = csv::Reader::from_reader(preds.as_bytes());
    assert_eq!(r.headers().unwrap(), vec!["index", "prediction"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let v: serde_json::Value = serde_json::from_str(&row[1]).unwrap();
        let p: Vec<f64> = v["point"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-9);
    }
    run("eval");
    let eval: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["n_test"], 100);
    assert!(eval["test_risk"].as_f64().unwrap() < 0.5);
    run("diag");
    let diag = std::fs::read_to_string(dir.path().join("out/diag.csv")).unwrap();
    let lines: Vec<&str> = diag.lines().collect();
    assert_eq!(lines[0], "lambda,d_eff,kappa_sq_over_lambda,n");
    assert_eq!(lines.len(), 5);
    let d: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn finite_eval_reports_exact_excess() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RATES.replace("[rates]\nn_grid = [20, 40, 80, 160]\nrepetitions = 10\n", "[eval]\nn_train = 200\nn_test = 100\n");
    std::fs::write(dir.path().join("e.toml"), cfg).unwrap();
    let o = ile(dir.path(), &["eval", "--config", "e.toml"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/eval.json")).unwrap()).unwrap();
    let (risk, bayes, excess) = (
        eval["exact_risk"].as_f64().unwrap(),
        eval["bayes_risk"].as_f64().unwrap(),
        eval["excess_risk"].as_f64().unwrap(),
    );
    assert!(excess >= -1e-12 && (risk - bayes - excess).abs() < 1e-15);
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ile(dir.path(), &["fit"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config is required"));
}
