use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entbal::simbench::{generate, Scenario};

fn entbal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entbal"))
        .args(args)
        .env_remove("ENTBAL_THREADS")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn cohort(dir: &Path) -> PathBuf {
    let path = dir.join("cohort.csv");
    generate(Scenario::Main, 300, 99, 0)
        .to_dataset()
        .write_csv(&path, "y", "dose")
        .unwrap();
    path
}

fn data_flags(input: &Path) -> Vec<String> {
    [
        "--input",
        input.to_str().unwrap(),
        "--outcome",
        "y",
        "--exposure",
        "dose",
        "--covariate",
        "X1:continuous",
        "--covariate",
        "X2:continuous",
        "--covariate",
        "X3:binary",
    ]
    .map(String::from)
    .to_vec()
}

fn run(sub: &str, extra: &[&str], input: &Path, out: &Path) -> Output {
    let mut args = vec![sub.to_string()];
    args.extend(data_flags(input));
    args.extend(extra.iter().map(|s| s.to_string()));
    args.extend(["--out-dir".to_string(), out.to_str().unwrap().to_string()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    entbal(&refs)
}

#[test]
fn weights_writes_csv_and_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let input = cohort(tmp.path());
    let out = tmp.path().join("w");
    let o = run("weights", &["--moments", "3"], &input, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = fs::read_to_string(out.join("weights.csv")).unwrap();
    assert_eq!(w.lines().count(), 301);
    assert!(w.starts_with("row,weight\n"));
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["method"], "eb_3");
    assert_eq!(diag["converged"], true);
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["command"], "weights");
    assert_eq!(cfg["args"]["method"]["moments"], 3);
}

#[test]
fn drc_with_supplied_weights_and_bootstrap() {
    let tmp = tempfile::tempdir().unwrap();
    let input = cohort(tmp.path());
    let wdir = tmp.path().join("w");
    assert!(run("weights", &[], &input, &wdir).status.success());
    let w = wdir.join("weights.csv");
    let out = tmp.path().join("d");
    let o = run(
        "drc",
        &["--weights", w.to_str().unwrap(), "--grid", "4:20:9", "--bootstrap", "10", "--format", "csv"],
        &input,
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("a0,estimate,se,lo,hi,available"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "4");
    assert!(first[2].parse::<f64>().unwrap() > 0.0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), curve);
}

#[test]
fn balance_reports_tables_and_ecdf() {
    let tmp = tempfile::tempdir().unwrap();
    let input = cohort(tmp.path());
    let out = tmp.path().join("b");
    let o = run("balance", &[], &input, &out);
    assert!(o.status.success());
    for f in ["balance.txt", "balance.csv", "balance.json", "ecdf.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let input = cohort(tmp.path());
    let out = tmp.path().join("x");
    assert_eq!(run("weights", &["--bogus"], &input, &out).status.code(), Some(1));
    assert_eq!(run("weights", &["--method", "cbps"], &input, &out).status.code(), Some(1));
    assert_eq!(run("drc", &["--grid", "5:1:3"], &input, &out).status.code(), Some(1));
    let missing = tmp.path().join("nope.csv");
    let o = run("weights", &[], &missing, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
    let o = entbal(&["weights", "--input", input.to_str().unwrap(), "--outcome", "y", "--exposure", "dose", "--covariate", "Z:continuous", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(entbal(&["--help"]).status.code(), Some(0));
    assert_eq!(entbal(&["--version"]).status.code(), Some(0));
}

#[test]
fn collinear_exposure_is_flagged_in_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let d = generate(Scenario::Main, 300, 99, 0);
    let input = tmp.path().join("collinear.csv");
    let mut text = String::from("y,dose,X1,X2\n");
    for i in 0..d.n() {
        text.push_str(&format!("{},{},{},{}\n", d.y[i], d.x1[i], d.x1[i], d.x2[i]));
    }
    fs::write(&input, text).unwrap();
    let out = tmp.path().join("c");
    let o = entbal(&[
        "weights", "--input", input.to_str().unwrap(), "--outcome", "y", "--exposure", "dose",
        "--covariate", "X1:continuous", "--covariate", "X2:continuous", "--out-dir", out.to_str().unwrap(),
    ]);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let flagged = diag["any_at_bound"] == true || diag["max_residual"].as_f64().unwrap() > 1e-3 || diag["converged"] == false;
    assert!(flagged, "{diag}");
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
}

#[test]
fn numerical_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("flat.csv");
    let mut text = String::from("y,dose,x\n");
    for i in 0..30 {
        text.push_str(&format!("{},5,{}\n", i % 3, i as f64 * 0.1));
    }
    fs::write(&input, text).unwrap();
    let base = ["--input", input.to_str().unwrap(), "--outcome", "y", "--exposure", "dose", "--covariate", "x:continuous"];
    let out = tmp.path().join("o");
    let mut gps = vec!["weights"];
    gps.extend(base);
    gps.extend(["--method", "normal_gps", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(entbal(&gps).status.code(), Some(2));
    let mut drc = vec!["drc"];
    drc.extend(base);
    drc.extend(["--method", "unweighted", "--grid", "4:6:3", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(entbal(&drc).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = cohort(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run("bootstrap", &["--replicates", "6", "--seed", "3", "--grid", "5:25:5", "--dump-replicates"], &input, out);
        assert!(o.status.success());
    }
    for f in ["curve.csv", "bootstrap.json", "replicates.csv", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn simulate_writes_table_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = entbal(&[
        "simulate", "--reps", "3", "--n", "300", "--methods", "unweighted,eb_2", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("Entropy Balancing (2)"));
    for f in ["metrics.txt", "metrics.csv", "metrics.json", "balance.txt", "curves.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}
