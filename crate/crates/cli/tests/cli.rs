use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn bin(name: &str) -> String {
    fixtures().join("bin").join(name).display().to_string()
}

fn sysscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sysscope")).args(args).output().expect("runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn analyze_lists_exit() {
    let o = sysscope(&["analyze", &bin("exit_only")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l == "exit"));
}

#[test]
fn wrapper_flag_changes_result() {
    let with = stdout(&sysscope(&["analyze", &bin("fig2b")]));
    let without = stdout(&sysscope(&["analyze", "--no-wrapper-heuristic", &bin("fig2b")]));
    assert_eq!(with.lines().collect::<Vec<_>>(), ["getpid", "exit"]);
    assert!(without.lines().count() >= 6);
}

#[test]
fn oci_profile_is_json_and_deterministic() {
    let a = sysscope(&["analyze", "--format", "oci", "--default-action", "kill", &bin("fig1b")]);
    let b = sysscope(&["analyze", "--format", "oci", "--default-action", "kill", &bin("fig1b")]);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["defaultAction"], "SCMP_ACT_KILL_PROCESS");
}

#[test]
fn interface_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("libstub.iface.json");
    let o = sysscope(&["interface", &bin("libstub.so"), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(v.get("interface_id").is_some());
    assert!(v["func_graph"].as_object().is_some_and(|m| !m.is_empty()));
}

#[test]
fn compare_passes_on_matching_trace() {
    let trace = fixtures().join("traces/exit_only.trace");
    let o = sysscope(&["compare", &bin("exit_only"), "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("recall 1 "));
}

#[test]
fn compare_fails_on_false_negative() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t");
    std::fs::write(&trace, "getpid() = 42\nexit(0) = ?\n").unwrap();
    let o = sysscope(&["compare", &bin("exit_only"), "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("false negatives: getpid"));
}

#[test]
fn incomplete_analysis_needs_a_policy() {
    assert_eq!(sysscope(&["analyze", &bin("poison")]).status.code(), Some(1));
    let o = sysscope(&["analyze", "--unresolved-policy", "allow-all", &bin("poison")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# incomplete"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(sysscope(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sysscope(&["analyze"]).status.code(), Some(2));
    assert_eq!(sysscope(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_binary_is_analysis_error_with_json_diagnostic() {
    let o = sysscope(&["--json", "analyze", "/nonexistent/program"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["exit_code"], 1);
    assert!(v["error"]["message"].as_str().is_some());
}

#[test]
fn config_file_round_trips_through_diagnostics() {
    // The `config` object of the diagnostics is itself a valid config file.
    let first = sysscope(&["--json", "--no-loader-baseline", "analyze", &bin("dag_exe")]);
    let v: serde_json::Value = serde_json::from_slice(&first.stderr).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.json");
    std::fs::write(&conf, v["config"].to_string()).unwrap();
    let second = sysscope(&["--config", conf.to_str().unwrap(), "analyze", &bin("dag_exe")]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(stdout(&second).lines().collect::<Vec<_>>(), ["write", "getpid", "exit", "getppid"]);
}

#[test]
fn phases_tau_and_json() {
    let o = sysscope(&["phases", "--tau", "1", "--format", "json", &bin("phases")]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["phases"].as_array().map(Vec::len), Some(6));
    assert_eq!(sysscope(&["phases", "--tau", "2", &bin("phases")]).status.code(), Some(1));
}

#[test]
fn dump_cfg_lists_indirect_edges() {
    let o = sysscope(&["dump-cfg", &bin("fig5")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("0x401000 -> 0x40102b indirect"), "{text}");
}

#[test]
fn iface_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let a = sysscope(&["--iface-dir", d, "analyze", &bin("dag_exe")]);
    let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names.len(), 3, "{names:?}");
    let b = sysscope(&["--iface-dir", d, "analyze", &bin("dag_exe")]);
    assert_eq!(a.stdout, b.stdout);
}
