use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fluxtune"))
}

fn write_config(dir: &Path, body: &serde_json::Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body.to_string()).unwrap();
    p
}

fn reference() -> serde_json::Value {
    serde_json::to_value(fluxtune::config::RunConfig::reference()).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"))
}

#[test]
fn derive_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &reference());
    let out = bin().args(["derive", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# tool=fluxtune\n"));
    assert!(text.contains("\nec_ghz,ej_ghz,eb_ghz,"));
}

#[test]
fn config_from_stdin_and_json_output() {
    let mut child = bin()
        .args(["validate", "--config", "-", "--format", "json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(reference().to_string().as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["provenance"]["subcommand"], "validate");
    assert!(v["rows"].as_array().unwrap().iter().all(|r| r["pass"] == true));
}

#[test]
fn flag_overrides_and_byte_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference();
    cfg["f_grid"] = serde_json::json!({"start": 0.98, "stop": 0.99, "points": 3});
    let path = write_config(dir.path(), &cfg);
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["schedule", "--engine", "perturbative", "--nb", "12", "--ncharge", "15", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out_path)
            .env("FLUXTUNE_THREADS", "1")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(out_path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert!(a.contains("# engine=perturbative\n"));
    assert!(a.contains("\nf,f_prime,delta,delta_e_exact,delta_e_pert,g,g0,gz,g_over_wc,regime\n"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn missing_device_fields_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &serde_json::json!({}));
    let out = bin().args(["derive", "--config"]).arg(&path).output().unwrap();
    let err = error_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("device.ej_ghz"));
}

#[test]
fn unreadable_config_reports_io() {
    let out = bin().args(["derive", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(error_json(&out)["error"], "io");
}

#[test]
fn bad_thread_count_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &reference());
    let out = bin()
        .args(["derive", "--config"])
        .arg(&path)
        .env("FLUXTUNE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn failed_run_leaves_no_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference();
    cfg["target_delta_e_ghz"] = serde_json::json!(1e6);
    cfg["f_grid"] = serde_json::json!({"start": 0.98, "stop": 0.99, "points": 2});
    let path = write_config(dir.path(), &cfg);
    let out_path = dir.path().join("out.csv");
    let out = bin()
        .args(["schedule", "--engine", "perturbative", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(error_json(&out)["error"], "row");
    assert!(!out_path.exists());
}
