use std::path::Path;
use std::process::{Command, Output};

fn glshrink(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_glshrink"));
    cmd.args(args).env_remove("GLSHRINK_THREADS");
    if let Some(t) = threads {
        cmd.env("GLSHRINK_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, rules: &[&str], extra: &str) -> String {
    let rules: Vec<String> = rules.iter().map(|r| format!("\"{r}\"")).collect();
    let out = dir.join("results.csv");
    let text = format!(
        r#"{{"n": 2000, "delta2": 1.5, "b_list": [0, 1], "rules": [{}], "replicates": 100, "seed": 42, "output_path": "{}"{extra}}}"#,
        rules.join(", "),
        out.display()
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn compare_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["fixed:auto", "bh:auto", "oracle"], "");
    let out = glshrink(&["compare", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("rule_id,n,q_n,b_or_signal_id,replicates,fdr,se_fdr"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 6);
    assert_eq!(json[0]["rule_id"], "fixed:auto");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["eb", "ell", "fixed:auto@strawderman-berger"], "");
    let mut outputs = Vec::new();
    for threads in ["1", "3", "auto"] {
        let sub = dir.path().join(format!("t{threads}"));
        std::fs::create_dir(&sub).unwrap();
        let out = glshrink(&["compare", "--config", &cfg, "--out", sub.to_str().unwrap()], Some(threads));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(sub.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["oracle"], "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir(&a).unwrap();
    std::fs::create_dir(&b).unwrap();
    assert_eq!(glshrink(&["compare", "--config", &cfg, "--out", a.to_str().unwrap()], None).status.code(), Some(0));
    let out = glshrink(&["compare", "--config", &cfg, "--seed", "43", "--out", b.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(b.join("results.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",43"));
    assert_ne!(std::fs::read(a.join("results.csv")).unwrap(), csv.into_bytes());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["nonsense"], "");
    let out = glshrink(&["compare", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
    assert!(!dir.path().join("results.csv").exists());

    let cfg = write_config(dir.path(), &["oracle"], r#", "kernel": "horseshoe""#);
    assert_eq!(glshrink(&["prop1", "--config", &cfg], None).status.code(), Some(2));
    assert_eq!(glshrink(&["compare"], None).status.code(), Some(2));
    assert_eq!(glshrink(&["shrinkage-curve", "--tau", "1.5"], None).status.code(), Some(2));
    assert_eq!(glshrink(&["shrinkage-curve", "--tau", "0.01", "--grid", "0:10:0"], None).status.code(), Some(2));
    assert_eq!(glshrink(&["shrinkage-curve", "--tau", "0.01", "--kernel", "cauchy"], None).status.code(), Some(2));
    assert_eq!(glshrink(&["compare", "--config", &cfg, "--threads", "zero"], None).status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(glshrink(&["compare", "--config", missing.to_str().unwrap()], None).status.code(), Some(3));
    let cfg = write_config(dir.path(), &["oracle"], "");
    let nowhere = dir.path().join("no/such/dir");
    let out = glshrink(&["compare", "--config", &cfg, "--out", nowhere.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn shrinkage_curve_to_stdout_and_file() {
    let out = glshrink(&["shrinkage-curve", "--tau", "0.01", "--grid", "0:10:0.1"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (x, v) = l.split_once(',').unwrap();
            (x.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1));

    let dir = tempfile::tempdir().unwrap();
    let out = glshrink(&["shrinkage-curve", "--tau", "0.1", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("shrinkage_curve.csv").exists());
}

#[test]
fn prop1_and_validate_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["oracle"], r#", "kernel": "tpbn:1:1""#);
    let out = glshrink(&["prop1", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.contains("fixed:auto@tpbn:1:1") && csv.contains("fixed:auto@horseshoe"));

    let out = glshrink(&["validate-kernel", "--kernel", "inv-gamma:0.5"], None);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
}
