use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cbchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_is_reproducible_and_echoes_inputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "duration = 100\nr = 0.8\n");
    let a = out_arg(tmp.path(), "a");
    let b = out_arg(tmp.path(), "b");
    for out in [&a, &b] {
        let o = cbchain(&["simulate", "--config", &cfg, "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("misled_events="));
        assert!(stdout(&o).contains("hard_forks="));
        assert!(stdout(&o).contains("blocks_minted="));
    }
    let report = |d: &str| fs::read(Path::new(d).join("report.json")).unwrap();
    assert_eq!(report(&a), report(&b));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&a).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    let resolved = fs::read_to_string(Path::new(&a).join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 7"));
    assert!(resolved.contains("delivery_ratio = 0.8"));

    let c = out_arg(tmp.path(), "c");
    let resolved_path = Path::new(&a).join("config.resolved.toml");
    let o = cbchain(&[
        "simulate",
        "--config",
        resolved_path.to_str().unwrap(),
        "--out",
        &c,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&a), report(&c));

    let counters = fs::read_to_string(Path::new(&a).join("counters.csv")).unwrap();
    let mut lines = counters.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("seed,misled_events,hard_forks"));
    assert!(lines.next().unwrap().starts_with("7,"));
}

#[test]
fn simulate_writes_trace_and_chain_dump() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "o");
    let o = cbchain(&["simulate", "--out", &out, "--trace", "--dump-chain"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = Path::new(&out);
    let trace = fs::read_to_string(dir.join("trace.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first["at"].is_u64() && first["event"].is_string());
    let chain = fs::read(dir.join("chain.bin")).unwrap();
    assert_eq!(&chain[..4], b"CBCH");
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("chain.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["height"], 0);
}

#[test]
fn bad_values_exit_with_config_code_naming_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "q = 1.5\n");
    let out = out_arg(tmp.path(), "o");
    let o = cbchain(&["simulate", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("adversary_fraction"), "{}", stderr(&o));
    assert!(!Path::new(&out).exists());
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "unk.toml", "n_nodes = 5\nspeed = 3\n");
    let o = cbchain(&[
        "trials",
        "--config",
        &cfg,
        "--out",
        &out_arg(tmp.path(), "o"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speed"), "{}", stderr(&o));

    let params = write_config(
        tmp.path(),
        "p.toml",
        "m = 1\nn_c = 1\nr = 0.2\nl = 0\nk = 3\n",
    );
    let o = cbchain(&[
        "compare",
        "--config",
        &params,
        "--out",
        &out_arg(tmp.path(), "p"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field `k`"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = cbchain(&[
        "simulate",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        &out_arg(tmp.path(), "o"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn existing_files_are_kept_when_a_run_fails() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "mine").unwrap();
    let params = write_config(tmp.path(), "p.toml", "m = 0\nn_c = 1\nl = 0\nr = 0.2\n");
    let o = cbchain(&[
        "miss-model",
        "--config",
        &params,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "mine");
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
}

#[test]
fn trials_writes_one_counter_row_per_trial() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "o");
    let cfg = write_config(tmp.path(), "t.toml", "duration = 80\n");
    let o = cbchain(&[
        "trials", "--config", &cfg, "--trials", "3", "--jobs", "1", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("trials=3 "));
    let counters = fs::read_to_string(Path::new(&out).join("counters.csv")).unwrap();
    assert_eq!(counters.lines().count(), 4);
    let reports: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&out).join("reports.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
}

#[test]
fn analysis_tables_have_the_documented_columns() {
    let tmp = TempDir::new().unwrap();
    let f = out_arg(tmp.path(), "f");
    assert!(cbchain(&["fig5", "--out", &f]).status.success());
    let grid = fs::read_to_string(Path::new(&f).join("fig5.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("r,m,log10_pr"));
    assert_eq!(lines.count(), 24);
    assert!(grid.contains("0.9,2,-84"));

    let t = out_arg(tmp.path(), "t");
    assert!(cbchain(&["table1", "--out", &t]).status.success());
    let table = fs::read_to_string(Path::new(&t).join("table1.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("name,height,years,chain_log10_p,bound_ok")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
    assert!(rows[0].starts_with("Bitcoin,751789,"));
}

#[test]
fn compare_reports_measured_and_unmeasurable_regimes() {
    let tmp = TempDir::new().unwrap();
    let a = out_arg(tmp.path(), "a");
    let o = cbchain(&["compare", "--trials", "200000", "--seed", "3", "--out", &a]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&a).join("compare.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "measured");
    assert_eq!(v["agree"], true);

    let cfg = write_config(tmp.path(), "h.toml", "m = 2\nn_c = 2\nl = 0\nr = 0.9\n");
    let b = out_arg(tmp.path(), "b");
    let o = cbchain(&["compare", "--config", &cfg, "--out", &b]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("not measurable"));
}

#[test]
fn reproduce_runs_the_checklist() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "r");
    let o = cbchain(&["reproduce-paper", "--trials", "10", "--out", &out]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(!text.contains("[FAIL]"), "{text}");
    assert!(text.contains("[PASS] table1_bounds"));
    for f in [
        "fig5.csv",
        "table1.csv",
        "witness_mc.json",
        "compare.json",
        "checklist.json",
    ] {
        assert!(Path::new(&out).join(f).exists(), "{f}");
    }
    let checks: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&out).join("checklist.json")).unwrap()).unwrap();
    assert_eq!(checks.as_array().unwrap().len(), 8);
}

#[test]
fn failed_checks_exit_with_check_code_and_keep_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "lossy.toml",
        "r = 0.15\nduration = 150\n[chain]\nwitness_m = 1\nconfirm_depth = 1\n",
    );
    let out = out_arg(tmp.path(), "r");
    let o = cbchain(&[
        "reproduce-paper",
        "--config",
        &cfg,
        "--trials",
        "10",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("[FAIL] protocol_safety"));
    assert!(stderr(&o).contains("protocol_safety"));
    assert!(Path::new(&out).join("checklist.json").exists());
}
