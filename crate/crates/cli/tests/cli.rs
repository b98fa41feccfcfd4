use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arofac2::t3::{read_t3, write_t3};
use arofac2::{outer3, Tensor3};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arofac2"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema").join(name);
    jsonschema::validator_for(&read_json(&path)).unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn write_tensor(path: &Path, t: &Tensor3) {
    let mut buf = Vec::new();
    write_t3(t, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

fn synth(dir: &Path, name: &str, dims: [usize; 3], rank: usize, noise: f64, seed: u64) -> PathBuf {
    let d: Vec<String> = dims.iter().map(ToString::to_string).collect();
    ok(&[
        "synth", "--dims", &d[0], &d[1], &d[2], "--rank", &rank.to_string(), "--noise", &noise.to_string(), "--seed",
        &seed.to_string(), "--output-dir", s(dir), "--name", name,
    ]);
    dir.join(format!("{name}.t3"))
}

#[test]
fn synth_rank_one_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "tiny", [2, 2, 2], 1, 0.0, 7);
    let t = read_t3(fs::read(&path).unwrap().as_slice()).unwrap();
    assert_eq!(t.as_slice().len(), 8);
    let sv = t.unfold(1).unwrap().singular_values();
    let (max, min) = (sv.max(), sv.min());
    assert!(min <= 1e-12 * max);
    let side = read_json(&dir.path().join("tiny.truth.json"));
    assert_eq!(side["spec"]["seed"], 7);
    assert_eq!(side["truth"]["factors"].as_array().unwrap().len(), 1);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", [5, 6, 7], 2, 0.1, 3);
    let b = synth(dir.path(), "b", [5, 6, 7], 2, 0.1, 3);
    let c = synth(dir.path(), "c", [5, 6, 7], 2, 0.1, 4);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.truth.json")).unwrap(),
        fs::read(dir.path().join("b.truth.json")).unwrap()
    );
}

#[test]
fn decompose_rank_one_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("rank1.t3");
    write_tensor(&input, &outer3(&[1.0, 2.0, -1.0], &[0.5, 0.5, 1.0, 2.0], &[3.0, 1.0]).unwrap());
    let out_dir = dir.path().join("out");
    ok(&["decompose", "--input", s(&input), "--seed", "1", "--output-dir", s(&out_dir)]);

    let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["rank"], 1);
    assert_eq!(report["seed"], 1);
    assert_eq!(report["method"], "arofac2");
    assert!(report["rel_error"].as_f64().unwrap() < 1e-10);
    assert_valid(&schema("run_report.schema.json"), &report);

    // lossless JSON round-trip of every number
    let again: Value = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(again, report);

    for (mode, n) in [(1, 3), (2, 4), (3, 2)] {
        let csv = fs::read_to_string(out_dir.join(format!("factors_mode{mode}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("factor_index,coord_index,value"));
        assert_eq!(lines.count(), n);
    }
}

#[test]
fn rank_hint_sets_span_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "s", [8, 9, 10], 3, 0.0, 2);
    let out_dir = dir.path().join("out");
    ok(&["decompose", "--input", s(&input), "--rank-hint", "3", "--output-dir", s(&out_dir)]);
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["arofac2_config"]["span_target_dim"], 3);
    for m in report["diagnostics"]["modes"].as_array().unwrap() {
        assert_eq!(m["span_dim"], 3);
    }
    assert_eq!(report["rank"], 3);
}

#[test]
fn decompose_without_mode3_writes_slice_weights() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "s", [8, 9, 10], 2, 0.0, 5);
    let out_dir = dir.path().join("out");
    ok(&["decompose", "--input", s(&input), "--no-mode3", "--output-dir", s(&out_dir)]);
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["arofac2_config"]["compute_mode3"], false);
    assert_eq!(report["slice_weights"].as_array().unwrap().len(), 10);
    assert!(out_dir.join("slice_weights.csv").exists());
    assert_valid(&schema("run_report.schema.json"), &report);
}

#[test]
fn decompose_eem_stack() {
    let dir = tempfile::tempdir().unwrap();
    let t = outer3(&[1.0, 2.0, 3.0], &[1.0, -1.0, 0.5, 2.0], &[1.0, 2.0, 4.0]).unwrap();
    let pattern = dir.path().join("eem_{}.csv");
    arofac2::eem::write_eem_csv(&t, s(&pattern)).unwrap();
    let out_dir = dir.path().join("out");
    ok(&["decompose", "--input", s(&pattern), "--output-dir", s(&out_dir)]);
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["dims"], serde_json::json!([3, 4, 3]));
    assert_eq!(report["rank"], 1);
}

#[test]
fn compare_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "r1", [4, 5, 6], 1, 0.0, 1);
    let out_dir = dir.path().join("cmp");
    ok(&["compare", "--input", s(&input), "--rank", "1", "--output-dir", s(&out_dir)]);
    let cmp = read_json(&out_dir.join("comparison.json"));
    assert_valid(&schema("comparison.schema.json"), &cmp);
    assert_eq!(cmp["arofac2_rank"], 1);
    assert_eq!(cmp["parafac_rank"], 1);
    assert!(cmp["arofac2_rel_error"].as_f64().unwrap() < 1e-6);
    assert!(cmp["parafac_rel_error"].as_f64().unwrap() < 1e-6);
    assert!(cmp["arofac2_matching"]["min_matched_corr"].as_f64().unwrap() > 0.999);
    for name in ["arofac2_report.json", "parafac_report.json"] {
        assert_valid(&schema("run_report.schema.json"), &read_json(&out_dir.join(name)));
    }
    assert!(out_dir.join("parafac_corr.csv").exists());
}

#[test]
fn compare_reports_rank_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "r4", [10, 11, 12], 4, 0.0, 6);
    let out_dir = dir.path().join("cmp");
    ok(&["compare", "--input", s(&input), "--rank", "5", "--output-dir", s(&out_dir)]);
    let cmp = read_json(&out_dir.join("comparison.json"));
    assert_eq!(cmp["arofac2_rank"], 4);
    assert_eq!(cmp["parafac_rank"], 5);
    assert_eq!(cmp["rank_discrepancy"], true);
    let par = read_json(&out_dir.join("parafac_report.json"));
    assert_eq!(par["factors"].as_array().unwrap().len(), 5);
}

#[test]
fn compare_without_sidecar_is_fit_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("plain.t3");
    write_tensor(&input, &outer3(&[1.0, 2.0], &[1.0, 0.0, 1.0], &[2.0, 1.0]).unwrap());
    let out_dir = dir.path().join("cmp");
    let out = ok(&["compare", "--input", s(&input), "--rank", "1", "--output-dir", s(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let cmp = read_json(&out_dir.join("comparison.json"));
    assert!(cmp.get("arofac2_matching").is_none());
    assert!(!cmp["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sweep", "--dims", "6", "7", "8", "--rank", "2", "--eps-grid", "0,0.01", "--n-seeds", "2", "--output-dir",
        s(dir.path()),
    ]);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "eps,seed,detected_rank,min_matched_corr,rel_error");
    assert_eq!(lines.len(), 5);
    let summary = fs::read_to_string(dir.path().join("rank_vs_eps.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("0,2,")));
}

#[test]
fn exit_codes_separate_input_and_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["decompose", "--input", s(&dir.path().join("none.t3"))]);
    assert_eq!(missing.status.code(), Some(3));

    let bad = dir.path().join("bad.t3");
    fs::write(&bad, "2 2 2\n1 2 3 x\n5 6 7 8\n").unwrap();
    let out = run(&["decompose", "--input", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let invalid = run(&["synth", "--dims", "2", "2", "2", "--rank", "3", "--output-dir", s(dir.path())]);
    assert_eq!(invalid.status.code(), Some(3));

    let flat = dir.path().join("flat.t3");
    write_tensor(&flat, &outer3(&[1.0], &[1.0, 2.0], &[1.0, 3.0]).unwrap());
    let numerical = run(&["decompose", "--input", s(&flat), "--output-dir", s(dir.path())]);
    assert_eq!(numerical.status.code(), Some(4));

    let usage = run(&["decompose"]);
    assert_eq!(usage.status.code(), Some(2));
}
