use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pqs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqs"))
        .args(args)
        .current_dir(dir)
        .env_remove("PQS_SEED")
        .output()
        .unwrap()
}

fn write_data(dir: &Path) {
    let mut text = String::from("x1,y,x2,x3\n");
    for i in 0..60 {
        let a = ((i * 37) % 17) as f64 / 8.0 - 1.0;
        let b = ((i * 11) % 13) as f64 / 6.0 - 1.0;
        let c = ((i * 5) % 7) as f64 / 3.0 - 1.0;
        let y = u8::from(a - 0.5 * b + 0.3 * ((i * 7) % 5) as f64 - 0.6 > 0.0);
        text.push_str(&format!("{a},{y},{b},{c}\n"));
    }
    fs::write(dir.join("d.csv"), text).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fit_writes_coefficients_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let o = pqs(
        &["fit", "--model", "logistic", "--penalty", "scad", "--r", "3.7", "--lambda", "0.1", "--data", "d.csv", "--out", "fit.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: Value = serde_json::from_slice(&fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["beta_hat"].as_array().unwrap().len(), 3);
    assert_eq!(fit["columns"], serde_json::json!(["x1", "x2", "x3"]));
    assert!(fit["objective"].is_f64());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("fit.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["resolved"]["command"], "fit");
    assert_eq!(m["tool"], "pqs");
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let o = pqs(&["fit", "--model", "linear", "--penalty", "scad", "--lambda", "-1", "--data", "d.csv", "--out", "f.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda must be nonnegative"));

    let o = pqs(&["fit", "--model", "linear", "--penalty", "bridge", "--q", "1.5", "--lambda", "1", "--data", "d.csv", "--out", "f.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q must lie in (0,1]"));

    let o = pqs(&["fit", "--model", "linear", "--penalty", "bridge", "--lambda", "1", "--data", "missing.csv", "--out", "f.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("noy.csv"), "a,b\n1,2\n").unwrap();
    let o = pqs(&["fit", "--model", "linear", "--penalty", "bridge", "--lambda", "1", "--data", "noy.csv", "--out", "f.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`y`"));

    let o = pqs(&["fit", "--model", "poisson"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn select_tables() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let run = |sel: &str, pen: &str, out: &str| {
        let o = pqs(
            &["select", "--model", "logistic", "--penalty", pen, "--selector", sel, "--folds", "5", "--mc-samples", "200", "--seed", "3", "--data", "d.csv", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(dir.path().join(out).join("path.csv")).unwrap()
    };
    let bridge = run("aic", "bridge", "a");
    let mut lines = bridge.lines();
    assert_eq!(lines.next().unwrap(), "lambda,loglik,active_count,k_hat,k_hat_stderr,cv_deviance,score");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[3], "0");
        assert_eq!(cells[5], "");
    }
    let cv = run("cv", "scad", "b");
    for line in cv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[5].parse::<f64>().is_ok());
        assert_eq!(cells[5], cells[6]);
    }
    assert_eq!(run("cv", "scad", "c"), cv);
    let selected: Value = serde_json::from_slice(&fs::read(dir.path().join("b/selected.json")).unwrap()).unwrap();
    assert_eq!(selected["selector"], "cv");
    assert!(selected["lambda_hat"].is_f64());
    assert!(dir.path().join("b/manifest.json").exists());
}

#[test]
fn select_with_user_grid_and_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let args = ["select", "--model", "logistic", "--penalty", "mcp", "--lambda-grid", "0.05,0.4,0.1", "--mc-samples", "100", "--data", "d.csv", "--out"];
    let run = |out: &str, seed: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_pqs"))
            .args(args)
            .arg(out)
            .current_dir(dir.path())
            .env("PQS_SEED", seed)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(dir.path().join(out).join("path.csv")).unwrap()
    };
    let a = run("a", "9");
    let lambdas: Vec<&str> = a.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(lambdas, ["0.4", "0.1", "0.05"]);
    assert_eq!(run("b", "9"), a);
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
}

#[test]
fn bench_preset_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = pqs(
            &["bench", "--preset", "table1-linear-case2-n100", "--reps", "1", "--seed", "7", "--kl-copies", "50", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("a");
    run("b");
    let read = |p: &str| fs::read_to_string(dir.path().join(p)).unwrap();
    assert_eq!(read("a/reps.csv"), read("b/reps.csv"));
    assert_eq!(read("a/summary.csv"), read("b/summary.csv"));
    let summary = read("a/summary.csv");
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,penalty,case,p,k,n,selector,kl_mean,kl_sd,fp_mean,fn_mean,reps_ok,failures"
    );
    let selectors: Vec<String> = lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            assert_eq!(&c[..6], ["linear", "bridge(q=0.2)", "case2", "8", "2", "100"]);
            c[6].to_string()
        })
        .collect();
    assert_eq!(selectors, ["aic", "cv"]);
    assert!(read("a/reps.csv").starts_with("model,penalty,case,p,k,n,selector,rep,lambda_hat,kl,fp,fn\n"));

    let o = pqs(&["replay", "--manifest", "a/manifest.json", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read("a/reps.csv"), read("r/reps.csv"));
    assert_eq!(read("a/summary.csv"), read("r/summary.csv"));
}

#[test]
fn bench_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = pqs(&["bench", "--preset", "table9", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("table1-linear-case1-n50"));

    fs::write(
        dir.path().join("c.json"),
        r#"{"model":"linear","penalty":{"kind":"scad","r":2.7},"case":{"beta1":1,"beta2":1},"design":{"p":8,"k":"two","n":50},"reps":2}"#,
    )
    .unwrap();
    let o = pqs(&["bench", "--config", "c.json", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("design.k"), "{}", stderr(&o));

    fs::write(
        dir.path().join("c.json"),
        r#"{"model":"linear","penalty":{"kind":"scad","r":2.7},"case":{"beta1":1,"beta2":1},"design":{"p":8,"k":2,"n":50},"reps":2,"extra":1}"#,
    )
    .unwrap();
    let o = pqs(&["bench", "--config", "c.json", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = pqs(&["bench", "--design", "3,2,50", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_config_file_seed_is_used() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"model":"linear","penalty":{"kind":"mcp","r":3},"case":{"beta1":0.1,"beta2":0.5},"design":{"p":4,"k":1,"n":40},"reps":2,"kl_copies":10,"mc_samples":50,"grid_len":8,"seed":123}"#,
    )
    .unwrap();
    let o = pqs(&["bench", "--config", "c.json", "--out", "x"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("x/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 123);
    assert_eq!(m["resolved"]["config"]["seed"], 123);
}
