use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::{Retrieve, Uri};
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn program(name: &str) -> PathBuf {
    root().join("programs").join(name)
}

fn lucidc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lucidc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

struct SchemaDir;

impl Retrieve for SchemaDir {
    fn retrieve(&self, uri: &Uri<String>) -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
        let name = uri.as_str().rsplit('/').next().unwrap_or_default().to_string();
        let text = std::fs::read_to_string(root().join("schemas").join(name))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn assert_valid(schema: &str, doc: &Value) {
    let s: Value = serde_json::from_str(&std::fs::read_to_string(root().join("schemas").join(schema)).unwrap()).unwrap();
    let v = jsonschema::options().with_retriever(SchemaDir).build(&s).unwrap();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}\n{doc:#}");
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_badordering_exits_one_with_order_error() {
    let o = lucidc(&["check", "--json", path_str(&program("badordering.lucid"))]);
    assert_eq!(o.status.code(), Some(1));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid("diagnostics.schema.json", &doc);
    let ds = doc["diagnostics"].as_array().unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds[0]["kind"], "OrderError");
    assert_eq!(ds[0]["handler"], "setArr1");
}

#[test]
fn check_count_pkt_exits_zero() {
    let o = lucidc(&["check", path_str(&program("count_pkt.lucid"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = lucidc(&["check", "--json", path_str(&program("count_pkt.lucid"))]);
    assert_valid("diagnostics.schema.json", &serde_json::from_str(&stdout(&o)).unwrap());
}

#[test]
fn missing_file_exits_two() {
    assert_eq!(lucidc(&["check", "/definitely/not/here.lucid"]).status.code(), Some(2));
    assert_eq!(lucidc(&["compile", "/definitely/not/here.lucid"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(lucidc(&[]).status.code(), Some(2));
    assert_eq!(lucidc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        lucidc(&["interp", "a", "b", "--exec", "bogus"]).status.code(),
        Some(2)
    );
}

#[test]
fn compile_count_pkt_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cp");
    let o = lucidc(&["compile", path_str(&program("count_pkt.lucid")), "--emit-ir", "-o", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "stages: 4\ncompression ratio: 1.75\n");
    let p4 = std::fs::read_to_string(dir.path().join("cp.p4")).unwrap();
    assert!(p4.contains("control Ingress"));
    let layout: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cp.layout.json")).unwrap()).unwrap();
    assert_valid("layout.schema.json", &layout);
    assert_eq!(layout["report"]["stages_used"], 4);
    let ir: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cp.ir.json")).unwrap()).unwrap();
    assert_valid("ir.schema.json", &ir);
}

#[test]
fn compile_without_optimization_uses_seven_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cp");
    let o = lucidc(&["compile", path_str(&program("count_pkt.lucid")), "--no-opt", "--json", "-o", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid("report.schema.json", &report);
    assert_eq!(report["stages_used"], 7);
    assert!(!dir.path().join("cp.ir.json").exists());
}

#[test]
fn two_stage_pipeline_reports_placement_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m2.json");
    std::fs::write(&cfg, r#"{"stages": 2}"#).unwrap();
    let o = lucidc(&[
        "compile",
        path_str(&program("count_pkt.lucid")),
        "--config",
        path_str(&cfg),
        "-o",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("PlacementError") || err.contains("cannot place"), "{err}");
    assert!(err.contains("stage"), "{err}");
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"stages": 0}"#).unwrap();
    let o = lucidc(&["compile", path_str(&program("count_pkt.lucid")), "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"colour": 1}"#).unwrap();
    let o = lucidc(&["compile", path_str(&program("count_pkt.lucid")), "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

fn log_lines(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn interp_evprog_matches_the_schedule() {
    let o = lucidc(&[
        "interp",
        path_str(&program("evprog.lucid")),
        path_str(&program("evprog.spec.json")),
        "--trace-state",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = log_lines(&o);
    for l in &lines {
        assert_valid("log-record.schema.json", l);
    }
    let execs: Vec<(String, u64)> = lines
        .iter()
        .filter(|l| l["type"] == "exec")
        .map(|l| (l["event"].as_str().unwrap().to_string(), l["switch"].as_u64().unwrap()))
        .collect();
    assert_eq!(
        execs,
        vec![("a".into(), 1), ("b".into(), 1), ("c".into(), 2), ("c".into(), 3)]
    );
    assert_eq!(lines.last().unwrap()["type"], "summary");
}

#[test]
fn interp_forms_give_identical_logs() {
    let spec = root().join("crates/cli/tests/data/count_pkt.spec.json");
    let run = |form: &str| {
        let o = lucidc(&[
            "interp",
            path_str(&program("count_pkt.lucid")),
            path_str(&spec),
            "--exec",
            form,
            "--trace-state",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    let s = run("surface");
    assert!(s.lines().count() > 10);
    assert_eq!(s, run("ir"));
    assert_eq!(s, run("layout"));
}

#[test]
fn malformed_spec_exits_two_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"switches": [1], "events": [{"time_ns": 0, "switch": 7, "name": "a"}]}"#).unwrap();
    let o = lucidc(&["interp", path_str(&program("evprog.lucid")), path_str(&spec)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/events/0/switch"), "{}", stderr(&o));
}

#[test]
fn shipped_specs_match_the_input_schema() {
    for name in ["evprog.spec.json", "scan.spec.json"] {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(program(name)).unwrap()).unwrap();
        assert_valid("sim-spec.schema.json", &doc);
    }
}

#[test]
fn recirc_cap_is_applied() {
    let o = lucidc(&[
        "interp",
        path_str(&program("scan.lucid")),
        path_str(&program("scan.spec.json")),
        "--recirc-cap",
        "1000000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = log_lines(&o).pop().unwrap();
    assert!(summary["recirc_pps_peak"].as_u64().unwrap() <= 1_000_000);
}

#[test]
fn model_reports_rate_and_utilization() {
    let o = lucidc(&["model", "--entries", "65536", "--interval", "0.1", "--flows", "100000"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid("model.schema.json", &doc);
    assert_eq!(doc["rate_pps"].as_f64().unwrap(), 2_255_360.0);
    assert!(doc.get("min_pkt_bytes").is_none());
    let o = lucidc(&["model", "--entries", "65536", "--interval", "0.1", "--flows", "1", "--min-pkt-model", "naive"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(doc["min_pkt_bytes"].as_f64().unwrap() > 125.0);
    assert_eq!(lucidc(&["model", "--entries", "1000", "--interval", "0.1", "--flows", "1"]).status.code(), Some(2));
}

#[test]
fn core_fuzz_reports_no_stuck_terms() {
    let o = lucidc(&["core-fuzz", "--seeds", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid("core-fuzz.schema.json", &doc);
    assert_eq!(doc["stuck"], 0);
    assert_eq!(doc["checked"], 200);
}

#[test]
fn version_prints_default_config() {
    let o = lucidc(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("lucidc "));
    let cfg = out.lines().nth(1).unwrap().split_once(": ").unwrap().1;
    let doc: Value = serde_json::from_str(cfg).unwrap();
    assert_valid("config.schema.json", &doc);
    assert_eq!(doc["stages"], 12);
}
