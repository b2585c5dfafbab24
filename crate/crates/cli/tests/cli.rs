use std::fs;
use std::io::Cursor;
use std::path::PathBuf;

use coverdx::synth::sample_single_fault_cases;
use coverdx::uncertainty::write_cases_csv;
use coverdx::{load_kb, KeyPolicy};
use coverdx_cli::run_command;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn kb3() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../kb/kb3.json")
        .to_string_lossy()
        .into_owned()
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run_with_input(args: &[&str], input: &str) -> Run {
    let mut argv = vec!["coverdx"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_command(argv, &mut Cursor::new(input.as_bytes()), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn run(args: &[&str]) -> Run {
    run_with_input(args, "")
}

#[test]
fn kbcheck_clean_fixture() {
    let r = run(&["kbcheck", &kb3()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.trim(), "0 errors, 0 warnings");
}

#[test]
fn kbcheck_reports_errors_and_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(kb3()).unwrap()).unwrap();
    doc["links"][0]["causal_strength"] = 0.0.into();
    doc["symptoms"].as_array_mut().unwrap().push(serde_json::json!(
        {"id": "s5", "label": "orphan", "question": "Is s5 present?"}
    ));
    let path = dir.path().join("bad.json");
    fs::write(&path, doc.to_string()).unwrap();
    let r = run(&["kbcheck", path.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.out.contains("1 errors, 1 warnings"), "{}", r.out);
    assert!(r.out.contains("orphan symptom s5"), "{}", r.out);
    assert!(r.err.starts_with("error:"), "{}", r.err);
}

#[test]
fn kbcheck_key_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(kb3()).unwrap()).unwrap();
    doc["faults"][0]["colour"] = "red".into();
    let path = dir.path().join("extra.json");
    fs::write(&path, doc.to_string()).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(run(&["kbcheck", p]).code, 1);
    let lenient = run(&["kbcheck", "--lenient", p]);
    assert_eq!(lenient.code, 0);
    assert!(lenient.out.contains("0 errors, 1 warnings"), "{}", lenient.out);
}

#[test]
fn diagnose_ranks_covers() {
    let r = run(&["diagnose", "--kb", &kb3(), "--present", "s1,s3", "--format", "json"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["candidates"][0]["faults"], serde_json::json!(["f1", "f2"]));
    assert_eq!(v["candidates"].as_array().unwrap().len(), 1);

    let text = run(&["diagnose", "--kb", &kb3(), "--present", "s1,s3"]);
    assert!(text.out.contains("1. {f1,f2}"), "{}", text.out);
}

#[test]
fn diagnose_single_fault_mode_and_absent() {
    let r = run(&[
        "diagnose", "--kb", &kb3(), "--present", "s2", "--absent", "s1", "--mode", "single", "--format", "json",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["candidates"][0]["faults"], serde_json::json!(["f2"]));
    assert_eq!(v["absent"], serde_json::json!(["s1"]));
}

#[test]
fn diagnose_errors() {
    let unknown = run(&["diagnose", "--kb", &kb3(), "--present", "s9"]);
    assert_eq!(unknown.code, 1);
    assert!(unknown.err.starts_with("error:"));
    let both = run(&["diagnose", "--kb", &kb3(), "--present", "s1", "--absent", "s1"]);
    assert_eq!(both.code, 2);
    let threshold = run(&["diagnose", "--kb", &kb3(), "--threshold", "0"]);
    assert_eq!(threshold.code, 2);
    assert_eq!(run(&["diagnose", "--kb", &kb3(), "--mode", "triple"]).code, 2);
    assert_eq!(run(&["diagnose", "--kb", "/nonexistent/kb.json"]).code, 1);
    assert_eq!(run(&["frobnicate"]).code, 2);
    assert_eq!(run(&["--help"]).code, 0);
}

#[test]
fn rulegen_emits_three_rules() {
    let r = run(&["rulegen", "--kb", &kb3()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let rules: Vec<Value> = serde_json::from_str(&r.out).unwrap();
    let pairs: Vec<(Value, Value)> = rules
        .iter()
        .map(|r| (r["antecedent"].clone(), r["consequent"].clone()))
        .collect();
    assert_eq!(
        pairs,
        vec![
            (serde_json::json!(["s1"]), "f1".into()),
            (serde_json::json!(["s3"]), "f2".into()),
            (serde_json::json!(["s4"]), "f3".into()),
        ]
    );
    let text = run(&["rulegen", "--kb", &kb3(), "--format", "text"]);
    assert!(text.out.contains("{s1} => f1"));
}

#[test]
fn cluster_exports() {
    let r = run(&["cluster", "--kb", &kb3()]);
    assert_eq!(r.code, 0);
    assert_eq!(r.out.trim(), "((f1:0.75,f2:0.75):0.25,f3:1);");

    let j = run(&["cluster", "--kb", &kb3(), "--items", "symptoms", "--format", "json", "--cut", "0.5"]);
    assert_eq!(j.code, 0, "{}", j.err);
    let v: Value = serde_json::from_str(&j.out).unwrap();
    assert_eq!(v["leaves"].as_array().unwrap().len(), 4);
    let clusters = v["clusters"].as_array().unwrap();
    let members: usize = clusters.iter().map(|c| c.as_array().unwrap().len()).sum();
    assert_eq!(members, 4);
}

#[test]
fn consult_reaches_a_conclusion() {
    let r = run_with_input(&["consult", "--kb", &kb3()], "y\nn\ny\n");
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("Q1 [s2]"), "{}", r.out);
    assert!(r.out.contains("status: concluded"), "{}", r.out);
    assert!(r.out.contains("1. {f2}"), "{}", r.out);
}

#[test]
fn consult_json_lines_and_eof() {
    let r = run_with_input(&["consult", "--kb", &kb3(), "--format", "json"], "w present\n");
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<Value> = r.out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["status"], "in-progress");
    assert!(lines[1].get("preview").is_some());
    assert_eq!(lines.last().unwrap()["summary"]["stopping_reason"], "still-open");
    assert_eq!(lines.last().unwrap()["summary"]["transcript"], serde_json::json!([]));

    let bad = run_with_input(&["consult", "--kb", &kb3(), "--format", "json"], "maybe\n");
    assert_eq!(bad.code, 2);
}

#[test]
fn estimate_writes_kb_and_report() {
    let kb = load_kb(fs::read(kb3()).unwrap().as_slice(), KeyPolicy::Strict).unwrap().kb;
    let cases = sample_single_fault_cases(&mut ChaCha8Rng::seed_from_u64(11), &kb, 4000);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cases.csv");
    write_cases_csv(fs::File::create(&csv).unwrap(), &kb, &cases).unwrap();
    let out = dir.path().join("kb.json");
    let report = dir.path().join("report.json");
    let r = run(&[
        "estimate",
        "--kb",
        &kb3(),
        "--cases",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let updated = load_kb(fs::read(&out).unwrap().as_slice(), KeyPolicy::Strict).unwrap().kb;
    let s = updated.link("f3", "s4").unwrap().causal_strength;
    assert!((s - 0.95).abs() < 0.05, "{s}");
    let rep: Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(rep["cases"], 4000);

    let missing = run(&["estimate", "--kb", &kb3(), "--cases", "/nonexistent.csv"]);
    assert_eq!(missing.code, 1);
}

#[test]
fn serve_refuses_invalid_kb() {
    let dir = tempfile::tempdir().unwrap();
    let kb_dir = dir.path().join("kb");
    fs::create_dir_all(&kb_dir).unwrap();
    fs::write(kb_dir.join("bad.json"), r#"{"faults": [{"id": "f1", "label": "x", "prior": 3}]}"#).unwrap();
    let r = run(&[
        "serve",
        "--port",
        "0",
        "--kb-dir",
        kb_dir.to_str().unwrap(),
        "--store",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("prior"), "{}", r.err);
    assert!(r.err.lines().last().unwrap().starts_with("error:"), "{}", r.err);
}
