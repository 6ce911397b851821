use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gwcrit"))
}

fn process(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../processes")
        .join(name)
        .canonicalize()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_prints_frobenius_data() {
    let o = run(&["validate", process("e1.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["v"][0].as_f64(), Some(1.0));
    assert_eq!(v["u"][0].as_f64(), Some(1.0));
    assert!((v["H_u"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn validate_rejects_subcritical() {
    let o = run(&["validate", process("subcritical.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not critical"), "{}", stderr(&o));
    assert!(stderr(&o).contains("0.8"));
}

#[test]
fn validate_reports_bad_probability_with_rule_index() {
    let dir = scratch("bad_prob");
    let path = dir.join("p.json");
    fs::write(
        &path,
        r#"{"types": 1, "rules": [
            {"type": 1, "offspring": [0], "prob": "1/2"},
            {"type": 1, "offspring": [2], "prob": "x/2"}]}"#,
    )
    .unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rule 1"), "{}", stderr(&o));
}

#[test]
fn io_and_parse_errors_exit_4() {
    let o = run(&["validate", "/nonexistent/process.json"]);
    assert_eq!(o.status.code(), Some(4));
    let dir = scratch("bad_json");
    let path = dir.join("p.json");
    fs::write(&path, "{\"types\": 1,\n \"rules\": [}").unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn estimate_on_e2() {
    let dir = scratch("estimate_e2");
    let cfg = write_config(
        &dir,
        serde_json::json!({
            "process": process("e2.json"),
            "master_seed": 7,
            "output_dir": dir.join("out"),
            "estimate": {"n": 10000}
        }),
    );
    let o = run(&["estimate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/estimate.json")).unwrap()).unwrap();
    assert_eq!(doc["master_seed"].as_u64(), Some(7));
    assert_eq!(doc["config_sha256"].as_str().unwrap().len(), 64);
    for s in 0..2 {
        let v = doc["estimate"]["v_hat"][s].as_f64().unwrap();
        assert!((v - 0.5).abs() <= 0.02, "{v}");
    }
    let csv = fs::read_to_string(dir.join("out/estimate.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256="));
    assert_eq!(csv.lines().nth(1), Some("name,estimate,truth,abs_error"));
}

#[test]
fn verify_thm4_flags_exact_identity_on_e2() {
    let dir = scratch("thm4_e2");
    let cfg = write_config(
        &dir,
        serde_json::json!({
            "process": process("e2.json"),
            "master_seed": 3,
            "output_dir": dir.join("out"),
            "verify_thm4": {"n_grid": [100, 1000, 10000], "chains": 10, "tolerance": 0.1}
        }),
    );
    let o = run(&["verify-thm4", cfg.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(
        text.contains("exact identity (1-lambda) S_lambda = u: PASS"),
        "{text}"
    );
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/verify_thm4.json")).unwrap())
            .unwrap();
    assert!(
        doc["report"]["theorem4"]["identity_error"]
            .as_f64()
            .unwrap()
            <= 1e-12
    );
}

#[test]
fn tolerance_failure_exits_3() {
    let dir = scratch("tol_fail");
    let cfg = write_config(
        &dir,
        serde_json::json!({
            "process": process("e1.json"),
            "master_seed": 3,
            "output_dir": dir.join("out"),
            "verify_thm1": {"n": 50, "replicates": 20, "tolerance": 0.0, "ks_tolerance": 0.0}
        }),
    );
    let o = run(&["verify-thm1", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).starts_with("FAIL"));
}

#[test]
fn missing_block_and_unknown_rule_are_validation_errors() {
    let dir = scratch("missing_block");
    let cfg = write_config(
        &dir,
        serde_json::json!({
            "process": process("e1.json"),
            "master_seed": 3,
            "output_dir": dir.join("out"),
            "estimate": {"n": 10, "tracked_rules": [{"type": 1, "offspring": [1]}]}
        }),
    );
    assert_eq!(
        run(&["sample", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let o = run(&["estimate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not in the support"), "{}", stderr(&o));
}

fn sample_csv(dir: &Path, workers: usize, seed_flag: Option<&str>) -> Vec<u8> {
    let cfg = write_config(
        dir,
        serde_json::json!({
            "process": process("e4.json"),
            "root_type": 2,
            "master_seed": 11,
            "workers": 0,
            "output_dir": dir.join("ignored"),
            "sample": {"n": 3000, "lambdas": [0.5, 0.9]}
        }),
    );
    let mut args = vec!["sample".to_string(), cfg.to_str().unwrap().to_string()];
    let out = dir.join(format!("w{workers}"));
    args.push("--out".into());
    args.push(out.to_str().unwrap().into());
    if let Some(s) = seed_flag {
        args.push("--seed".into());
        args.push(s.into());
    }
    let o = bin()
        .args(&args)
        .env("RAYON_NUM_THREADS", workers.to_string())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    fs::read(out.join("trees.csv")).unwrap()
}

#[test]
fn sample_is_byte_identical_and_flags_override() {
    let dir = scratch("sample_det");
    let a = sample_csv(&dir, 1, None);
    let b = sample_csv(&dir, 4, None);
    assert_eq!(a, b);
    let text = String::from_utf8(a.clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# config_sha256=") && header.ends_with("master_seed=11"));
    assert_eq!(
        lines.next(),
        Some("tree_index,size,f_1,f_2,censored,S_0.5,S_0.9")
    );
    assert_eq!(text.lines().count(), 3002);
    let c = sample_csv(&dir, 1, Some("12"));
    assert_ne!(a, c);
    assert!(String::from_utf8(c)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .ends_with("master_seed=12"));
}
