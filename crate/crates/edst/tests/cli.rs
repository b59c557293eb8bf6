use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use edst::cli::{run_with_io, Io};
use edst::formats::{corpus_to_string, load_corpus, load_embeddings, load_ontology, parse_turn, read_text};
use edst::model_file::load_model;
use edst_core::state::BeliefState;
use edst_core::tracker::{decode, track_turn_asr};
use serde_json::{json, Value};
use tempfile::TempDir;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_input(args: &[&str], input: &str) -> Outcome {
    let mut reader = input.as_bytes();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("edst").chain(args.iter().copied());
    let code = run_with_io(argv, &mut Io { input: &mut reader, output: &mut out, errors: &mut err });
    Outcome { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn run(args: &[&str]) -> Outcome {
    run_input(args, "")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generates a small synthetic domain and trains a one-epoch model in `dir`.
fn small_setup(dir: &Path, extra: &[&str]) {
    let r = run(&["gen-synthetic", "--dialogs", "12", "--seed", "3", "--out", p(dir)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (corpus, ontology, embeddings, dict, model) = (
        dir.join("corpus.json"),
        dir.join("ontology.json"),
        dir.join("embeddings.txt"),
        dir.join("dict.json"),
        dir.join("model.edst"),
    );
    let mut args = vec![
        "train", "--corpus", p(&corpus), "--ontology", p(&ontology), "--embeddings", p(&embeddings), "--dict", p(&dict),
        "--filters", "4", "--max-epochs", "1", "--out", p(&model),
    ];
    args.extend_from_slice(extra);
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let r = run(&["gradcheck", "--bogus"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("Usage"), "{}", r.stderr);
    assert_eq!(run(&[]).code, 1);
    assert_eq!(run(&["frobnicate"]).code, 1);
}

#[test]
fn help_exits_zero() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("gen-synthetic"));
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_edst");
    let ok = Command::new(bin).args(["gradcheck", "--seed", "7"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).arg("--nope").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn gradcheck_passes_and_reports_every_group() {
    let r = run(&["gradcheck", "--seed", "7"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(report["passed"], json!(true));
    assert!(report["max_error"].as_f64().unwrap() < 1e-4);
    assert!(report["groups"].as_object().unwrap().len() >= 5);
}

#[test]
fn conflicting_mode_flags_are_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let r = run(&[
        "train", "--corpus", "c.json", "--ontology", "o.json", "--embeddings", "e.txt", "--turn-labels",
        "--use-prev-belief", "--out", p(&dir.path().join("m")),
    ]);
    assert_eq!(r.code, 1);
    assert!(!dir.path().join("m").exists());
}

#[test]
fn missing_input_file_is_a_data_error() {
    let r = run(&["split", "--corpus", "/nonexistent/c.json", "--ontology", "/nonexistent/o.json", "--out", "/nonexistent/x"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("/nonexistent/o.json"), "{}", r.stderr);
}

#[test]
fn generated_corpus_round_trips_and_splits() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(run(&["gen-synthetic", "--dialogs", "20", "--seed", "9", "--asr", "--out", p(d)]).code, 0);
    let ontology = load_ontology(&d.join("ontology.json")).unwrap();
    let text = read_text(&d.join("corpus.json")).unwrap();
    let dialogs = load_corpus(&d.join("corpus.json"), &ontology).unwrap();
    assert_eq!(dialogs.len(), 20);
    assert_eq!(corpus_to_string(&dialogs), text);
    load_embeddings(&d.join("embeddings.txt")).unwrap();

    let out = d.join("parts");
    let r = run(&["split", "--corpus", p(&d.join("corpus.json")), "--ontology", p(&d.join("ontology.json")), "--out", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let sizes: Vec<usize> = ["train.json", "valid.json", "test.json"]
        .iter()
        .map(|f| load_corpus(&out.join(f), &ontology).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![12, 4, 4]);
}

#[test]
fn gen_synthetic_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        assert_eq!(run(&["gen-synthetic", "--dialogs", "5", "--seed", "4", "--out", p(dir.path())]).code, 0);
    }
    for f in ["ontology.json", "corpus.json", "embeddings.txt", "dict.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_is_reproducible_and_eval_reports_metrics() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    small_setup(a.path(), &[]);
    small_setup(b.path(), &[]);
    assert_eq!(fs::read(a.path().join("model.edst")).unwrap(), fs::read(b.path().join("model.edst")).unwrap());

    let d = a.path();
    let metrics_file = d.join("metrics.json");
    let r = run(&[
        "eval", "--model", p(&d.join("model.edst")), "--embeddings", p(&d.join("embeddings.txt")), "--corpus",
        p(&d.join("corpus.json")), "--out", p(&metrics_file),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m: Value = serde_json::from_str(&r.stdout).unwrap();
    for key in ["joint_goal", "request"] {
        let x = m[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
    assert!(m["turn_goal"].is_null());
    assert!(m["per_slot"].as_object().unwrap().len() == 3);
    let written: Value = serde_json::from_str(&read_text(&metrics_file).unwrap()).unwrap();
    assert_eq!(written, m);
}

#[test]
fn turn_label_models_report_turn_goal() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_setup(d, &["--turn-labels", "--mode", "mention2"]);
    let r = run(&[
        "eval", "--model", p(&d.join("model.edst")), "--embeddings", p(&d.join("embeddings.txt")), "--corpus",
        p(&d.join("corpus.json")),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(m["turn_goal"].is_f64());
}

#[test]
fn eval_without_gold_labels_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_setup(d, &[]);
    let unlabeled = d.join("unlabeled.json");
    fs::write(&unlabeled, r#"{"dialogs": [{"id": "u1", "turns": [{"user": ["hello"]}]}]}"#).unwrap();
    let r = run(&["eval", "--model", p(&d.join("model.edst")), "--embeddings", p(&d.join("embeddings.txt")), "--corpus", p(&unlabeled)]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("u1"), "{}", r.stderr);
}

#[test]
fn baseline_scores_templates() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(run(&["gen-synthetic", "--dialogs", "20", "--out", p(d)]).code, 0);
    let parts = d.join("parts");
    assert_eq!(run(&["split", "--corpus", p(&d.join("corpus.json")), "--ontology", p(&d.join("ontology.json")), "--out", p(&parts)]).code, 0);
    let r = run(&["baseline", "--data", p(&parts), "--ontology", p(&d.join("ontology.json")), "--dict", p(&d.join("dict.json"))]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(m["turn_goal"].is_f64());
    let r = run(&["baseline", "--data", p(&parts), "--ontology", p(&d.join("ontology.json")), "--train-fraction", "0"]);
    assert_eq!(r.code, 1);
}

#[test]
fn convert_woz_fixture() {
    let dir = TempDir::new().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = dir.path().join("woz.json");
    let r = run(&[
        "convert", "--format", "woz", "--input", p(&fixtures.join("woz_sample.json")), "--ontology",
        p(&fixtures.join("woz_ontology.json")), "--out", p(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(read_text(&out).unwrap(), read_text(&fixtures.join("woz_sample.converted.json")).unwrap());
    let r = run(&["convert", "--format", "iqiyi", "--input", "x", "--ontology", "y", "--out", "z"]);
    assert_eq!(r.code, 1);
}

fn track(d: &Path, input: &str) -> Vec<Value> {
    let r = run_input(&["track", "--model", p(&d.join("model.edst")), "--embeddings", p(&d.join("embeddings.txt"))], input);
    assert_eq!(r.code, 0, "{}", r.stderr);
    r.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn first_user_turn(d: &Path) -> String {
    let corpus: Value = serde_json::from_str(&read_text(&d.join("corpus.json")).unwrap()).unwrap();
    let mut turn = corpus["dialogs"][0]["turns"][0].clone();
    turn.as_object_mut().unwrap().remove("labels");
    turn.to_string()
}

#[test]
fn repl_reset_restores_the_neutral_prior() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_setup(d, &[]);
    let line = first_user_turn(d);
    let outputs = track(d, &format!("{line}\nreset\n"));
    assert_eq!(outputs.len(), 2);
    let ontology = load_ontology(&d.join("ontology.json")).unwrap();
    let neutral = BeliefState::new(&ontology);
    assert_eq!(outputs[1]["belief"]["values"], serde_json::to_value(neutral.value_dists()).unwrap());
    assert_eq!(outputs[1]["belief"]["slots"], serde_json::to_value(neutral.slot_conds()).unwrap());
}

#[test]
fn repl_is_deterministic_and_ignores_malformed_lines() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_setup(d, &[]);
    let line = first_user_turn(d);
    let outputs = track(d, &format!("reset\n{line}\nreset\n{line}\n{line}\n"));
    assert_eq!(outputs[1], outputs[3]);
    let with_error = track(d, &format!("reset\n{line}\n{{not json\n{{\"user\": [\"ok\", \"\"]}}\n{line}\n"));
    assert!(with_error[2]["error"].is_string());
    assert!(with_error[3]["error"].is_string(), "{}", with_error[3]);
    assert_eq!(with_error[1], outputs[3]);
    assert_eq!(with_error[4], outputs[4]);
}

#[test]
fn repl_asr_lines_delegate_to_nbest_tracking() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_setup(d, &[]);
    let line = r#"{"user": ["hello"], "asr": [{"tokens": ["hello"], "score": 0.6}, {"tokens": ["thanks", "ok"], "score": 0.4}]}"#;
    let out = track(d, &format!("{line}\n"));
    let embeddings = Arc::new(load_embeddings(&d.join("embeddings.txt")).unwrap());
    let model = load_model(&d.join("model.edst"), embeddings).unwrap();
    let turn = parse_turn(serde_json::from_str(line).unwrap(), model.ontology()).unwrap();
    let tb = track_turn_asr(&model, &turn.input(), &BeliefState::new(model.ontology())).unwrap();
    assert_eq!(out[0]["belief"]["values"], serde_json::to_value(tb.belief.value_dists()).unwrap());
    assert_eq!(out[0]["belief"]["slots"], serde_json::to_value(tb.belief.slot_conds()).unwrap());
    let state = decode(&model, &tb);
    assert_eq!(out[0]["state"]["requested"], serde_json::to_value(state.requested()).unwrap());
}
