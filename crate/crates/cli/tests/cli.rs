//! End-to-end runs of the `cftc` binary on a tiny synthetic corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use cftc::network::Branch;
use cftc::training::load_checkpoint;
use tempfile::TempDir;

const MANIFEST: &str = "manifest.json";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cftc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cftc")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert_eq!(code(out), 0, "stdout: {}\nstderr: {}", stdout(out), stderr(out));
}

/// File name → sha256 for every file in `dir` except the manifest.
fn hashes(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != MANIFEST)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), cftc::sha256_hex(&std::fs::read(&p).unwrap())))
        .collect()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap()
}

struct Workspace {
    tmp: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { tmp: tempfile::tempdir().unwrap() }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn synth(&self, name: &str) -> PathBuf {
        let out = self.dir(name);
        assert_ok(&cftc(&["synth", "--config", p(&fixture("tiny_synth.conf")), "--out", p(&out)]));
        out
    }

    fn train(&self, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.dir(name);
        let config = fixture("tiny_train.conf");
        let mut args = vec!["train", "--config", p(&config), "--data", p(data), "--out", p(&out)];
        args.extend_from_slice(extra);
        assert_ok(&cftc(&args));
        out
    }
}

#[test]
fn synth_writes_file_contract_and_is_deterministic() {
    let ws = Workspace::new();
    let a = ws.synth("a");
    let b = ws.synth("b");
    assert_eq!(
        file_names(&a),
        vec!["cooc_true_test.csv", "cooc_true_train.csv", "manifest.json", "test.tsv", "train.tsv"]
    );
    assert_eq!(hashes(&a), hashes(&b));
    let m = manifest(&a);
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["labels"], "4");
    assert_eq!(m["inputs"][0]["role"], "spec");

    let reseeded = ws.dir("c");
    assert_ok(&cftc(&["synth", "--config", p(&fixture("tiny_synth.conf")), "--out", p(&reseeded), "--seed", "9"]));
    assert_eq!(manifest(&reseeded)["seed"], 9);
    assert_ne!(hashes(&a)["train.tsv"], hashes(&reseeded)["train.tsv"]);
}

#[test]
fn infeasible_spec_exits_2_without_outputs() {
    let ws = Workspace::new();
    let spec = ws.dir("bad.conf");
    let text = std::fs::read_to_string(fixture("tiny_synth.conf")).unwrap().replace("base_label_prob = 0.3", "base_label_prob = 1.5");
    std::fs::write(&spec, text).unwrap();
    let out = ws.dir("out");
    let run = cftc(&["synth", "--config", p(&spec), "--out", p(&out)]);
    assert_eq!(code(&run), 2, "{}", stderr(&run));
    assert!(!out.exists());
}

#[test]
fn training_is_reproducible_and_leaves_inputs_untouched() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let before = hashes(&data);
    let started = Instant::now();
    let a = ws.train(&data, "a", &["--epochs", "1"]);
    assert!(started.elapsed().as_secs() < 60);
    let b = ws.train(&data, "b", &["--epochs", "1"]);
    assert_eq!(
        file_names(&a),
        vec!["cooc_normalized.csv", "cooc_raw.csv", "manifest.json", "model.ckpt", "training_log.csv"]
    );
    assert_eq!(hashes(&a), hashes(&b));
    assert_eq!(hashes(&data), before);

    let log = std::fs::read_to_string(a.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let m = manifest(&a);
    assert_eq!(m["config"]["epochs"], "1");
    assert_eq!(m["inputs"][0]["sha256"], before["train.tsv"].as_str());

    let reseeded = ws.train(&data, "c", &["--epochs", "1", "--seed", "5"]);
    assert_ne!(hashes(&a)["model.ckpt"], hashes(&reseeded)["model.ckpt"]);
}

#[test]
fn ablation_flags_reach_the_checkpoint() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let flags = ["--epochs", "1", "--no-mask", "--no-debias", "--encoder-mode", "frozen", "--select", "train"];
    let out = ws.train(&data, "ablated", &flags);
    let cfg = &manifest(&out)["config"];
    assert_eq!(cfg["disable_mask"], "true");
    assert_eq!(cfg["disable_debias"], "true");
    assert_eq!(cfg["encoder_mode"], "frozen");
    assert_eq!(cfg["selection"], "train");
    let model = load_checkpoint(&out.join("model.ckpt")).unwrap();
    assert!(model.config.disable_mask && model.config.disable_debias);
    assert_eq!(model.headline(), Branch::Fused);
    assert!(!model.config.effective_mask().probability_mask);
    assert_eq!(model.config.loss_weights().gamma, 0.0);
}

#[test]
fn bad_flag_values_and_missing_data_exit_2() {
    let ws = Workspace::new();
    let missing = cftc(&["train", "--data", p(&ws.dir("nowhere.tsv")), "--out", p(&ws.dir("out"))]);
    assert_eq!(code(&missing), 2);
    assert!(!ws.dir("out").exists());
    let data = ws.synth("data");
    let bad_mode = cftc(&["train", "--data", p(&data), "--out", p(&ws.dir("out")), "--encoder-mode", "sideways"]);
    assert_eq!(code(&bad_mode), 2);
    let bad_epochs = cftc(&["train", "--data", p(&data), "--out", p(&ws.dir("out")), "--epochs", "0"]);
    assert_eq!(code(&bad_epochs), 2);
}

#[test]
fn divergent_training_exits_3() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let config = ws.dir("explode.conf");
    let text = std::fs::read_to_string(fixture("tiny_train.conf")).unwrap().replace("learning_rate = 0.01", "learning_rate = 1e308");
    std::fs::write(&config, text).unwrap();
    let run = cftc(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&ws.dir("out"))]);
    assert_eq!(code(&run), 3, "{}", stderr(&run));
    assert!(stderr(&run).contains("non-finite"));
}

#[test]
fn overfit_model_scores_near_perfect_on_its_training_data() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let model = ws.train(&data, "model", &["--epochs", "60", "--select", "train", "--seed", "1"]);
    let out = ws.dir("eval");
    let run = cftc(&["eval", "--checkpoint", p(&model.join("model.ckpt")), "--data", p(&data.join("train.tsv")), "--out", p(&out)]);
    assert_ok(&run);
    let f1: f64 = stdout(&run)
        .lines()
        .find_map(|l| l.strip_prefix("micro_f1: "))
        .expect("headline micro-F1 line")
        .parse()
        .unwrap();
    assert!(f1 > 0.99, "micro-F1 {f1}");
}

#[test]
fn eval_and_bias_write_their_file_contracts() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let model = ws.train(&data, "model", &["--epochs", "2"]);
    let ckpt = model.join("model.ckpt");

    let eval_dir = ws.dir("eval");
    assert_ok(&cftc(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&eval_dir)]));
    assert_eq!(file_names(&eval_dir), vec!["manifest.json", "metrics.csv", "metrics.txt"]);
    let csv = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    for branch in Branch::ALL {
        for metric in ["hamming_loss", "micro_precision", "micro_recall", "micro_f1"] {
            let column = format!("{}.{metric}", branch.name());
            assert!(header.contains(&column.as_str()), "missing {column} in {header:?}");
        }
    }
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(manifest(&eval_dir)["inputs"][1]["path"], p(&data.join("test.tsv")));

    let bias_dir = ws.dir("bias");
    assert_ok(&cftc(&["bias", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&bias_dir), "--plots"]));
    assert_eq!(
        file_names(&bias_dir),
        vec![
            "cooc_after.csv",
            "cooc_after.png",
            "cooc_before.csv",
            "cooc_before.png",
            "cooc_true.csv",
            "cooc_true.png",
            "distances.csv",
            "manifest.json"
        ]
    );
    let distances = std::fs::read_to_string(bias_dir.join("distances.csv")).unwrap();
    let rows: Vec<&str> = distances.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("before,") && rows[2].starts_with("after,"));

    let again = ws.dir("bias2");
    assert_ok(&cftc(&["bias", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&again), "--plots"]));
    assert_eq!(hashes(&bias_dir), hashes(&again));

    let plain = ws.dir("bias3");
    assert_ok(&cftc(&["bias", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&plain)]));
    assert!(!plain.join("cooc_true.png").exists());
}

#[test]
fn integrity_failures_exit_4() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let model = ws.train(&data, "model", &["--epochs", "1"]);
    let ckpt = model.join("model.ckpt");

    let mut bytes = std::fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    let tampered = ws.dir("tampered.ckpt");
    std::fs::write(&tampered, bytes).unwrap();
    let run = cftc(&["eval", "--checkpoint", p(&tampered), "--data", p(&data), "--out", p(&ws.dir("e1"))]);
    assert_eq!(code(&run), 4, "{}", stderr(&run));
    assert!(!ws.dir("e1").exists());

    let foreign = ws.dir("foreign.tsv");
    std::fs::write(&foreign, "w01 w02 w03\tL0,Q9\n").unwrap();
    let run = cftc(&["eval", "--checkpoint", p(&ckpt), "--data", p(&foreign), "--out", p(&ws.dir("e2"))]);
    assert_eq!(code(&run), 4, "{}", stderr(&run));
    assert!(stderr(&run).contains("Q9"));

    let run = cftc(&["bias", "--checkpoint", p(&tampered), "--data", p(&data), "--out", p(&ws.dir("b1"))]);
    assert_eq!(code(&run), 4);
}

#[test]
fn intervention_table_contract() {
    let ws = Workspace::new();
    let data = ws.synth("data");
    let model_dir = ws.train(&data, "model", &["--epochs", "2"]);
    let ckpt = model_dir.join("model.ckpt");
    let text = "w01 w02 w07 w30 w31";

    let run = cftc(&["intervene", "--checkpoint", p(&ckpt), "--text", text, "--given", ""]);
    assert_ok(&run);
    let table = stdout(&run);
    let lines: Vec<&str> = table.lines().collect();
    let header: Vec<&str> = lines[0].split('|').map(str::trim).collect();
    assert_eq!(header, vec!["Given Labels", "Y_{T*+LI}", "Y_{T+LI}", "Y_cd"]);
    assert_eq!(lines[2].split('|').next().unwrap().trim(), "∅");

    let run = cftc(&["intervene", "--checkpoint", p(&ckpt), "--text", text, "--given", "L0, L2"]);
    assert_ok(&run);
    assert_eq!(stdout(&run).lines().nth(2).unwrap().split('|').next().unwrap().trim(), "L0,L2");

    let model = load_checkpoint(&ckpt).unwrap();
    let own = cftc::evaluation::intervene(&model, &cftc::corpus::tokenize(text, 256), None).unwrap();
    let expected = model.labels.format_set(&own.predict(Branch::Text));
    let run = cftc(&["intervene", "--checkpoint", p(&ckpt), "--text", text]);
    assert_ok(&run);
    assert_eq!(stdout(&run).lines().nth(2).unwrap().split('|').next().unwrap().trim(), expected);

    let run = cftc(&["intervene", "--checkpoint", p(&ckpt), "--text", text, "--given", "L0,nope"]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("nope") && stderr(&run).contains("L0,L1,L2,L3"));

    let out = ws.dir("iv");
    assert_ok(&cftc(&["intervene", "--checkpoint", p(&ckpt), "--text", text, "--given", "L1", "--out", p(&out)]));
    assert_eq!(file_names(&out), vec!["intervention.txt", "manifest.json"]);
}
