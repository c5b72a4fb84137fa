use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snapdial"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small corpus with trained trackers, shared by the tests below.
fn corpus() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        ok(&["gen-corpus", "--dialogues", "60", "--seed", "4", "--out", s(&data)]);
        ok(&["train-trackers", "--corpus", s(&data)]);
        dir
    })
    .path()
}

fn data() -> &'static Path {
    static DATA: OnceLock<PathBuf> = OnceLock::new();
    DATA.get_or_init(|| corpus().join("data"))
}

const QUICK: &[&str] = &["--lr", "0.5", "--max-epochs", "2", "--hidden", "8"];

fn only_subdir(dir: &Path) -> PathBuf {
    let subs: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(subs.len(), 1, "{subs:?}");
    subs[0].clone()
}

fn manifest_paths(path: &Path) -> Vec<String> {
    let m: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn train_help_lists_every_config_field() {
    let help = ok(&["train", "--help"]);
    let fields = serde_json::to_value(snapdial::training::TrainConfig::default()).unwrap();
    for key in fields.as_object().unwrap().keys() {
        let mut flag = String::from("--");
        for ch in key.chars() {
            if ch.is_ascii_uppercase() {
                flag.push('-');
                flag.push(ch.to_ascii_lowercase());
            } else {
                flag.push(ch);
            }
        }
        assert!(help.contains(&flag), "train --help lacks {flag}");
    }
}

#[test]
fn missing_inputs_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let nowhere = tmp.path().join("nothing");
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--corpus", s(&nowhere)],
        vec!["decode", "--checkpoint", s(&nowhere), "--corpus", s(&nowhere)],
        vec!["chat", "--checkpoint", s(&nowhere)],
        vec!["train-trackers", "--corpus", s(&nowhere)],
        vec!["train"],
        vec!["train", "--corpus", "x", "--variant", "gru"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn training_before_trackers_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    ok(&["gen-corpus", "--dialogues", "20", "--out", s(&data)]);
    let out = run(&["train", "--corpus", s(&data), "--out", s(&tmp.path().join("runs"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-trackers"));
}

#[test]
fn gen_corpus_writes_every_file_and_manifest() {
    let dir = data();
    for f in ["corpus.json", "ontology.json", "db.json", "splits.json", "trackers.json", "vocab.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let listed = manifest_paths(&dir.join("corpus.manifest.json"));
    assert_eq!(listed, ["corpus.json", "ontology.json", "db.json", "splits.json"]);
    assert_eq!(manifest_paths(&dir.join("trackers.manifest.json")), ["trackers.json", "vocab.json"]);
}

#[test]
fn config_file_then_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, "variant = \"mem\"\nhidden = 12\nmaxEpochs = 1\nlr = 0.5\n").unwrap();
    let runs = tmp.path().join("runs");
    ok(&["train", "--corpus", s(data()), "--out", s(&runs), "--config", s(&cfg), "--hidden", "6"]);
    let ckpt: Value = serde_json::from_str(
        &std::fs::read_to_string(only_subdir(&runs).join("1").join("checkpoint.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(ckpt["config"]["variant"], "mem");
    assert_eq!(ckpt["config"]["hidden"], 6);
    assert_eq!(ckpt["config"]["maxEpochs"], 1);
}

#[test]
fn pipeline_train_decode_eval_analyze() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let mut args = vec!["train", "--corpus", s(data()), "--out", s(&runs), "--seeds", "2", "--attention", "--snapshot"];
    args.extend(QUICK);
    ok(&args);
    let family = only_subdir(&runs);
    assert!(family.join("config.json").exists());
    for seed in ["1", "2"] {
        let d = family.join(seed);
        assert_eq!(manifest_paths(&d.join("manifest.json")), ["checkpoint.json", "history.csv"]);
    }
    let ckpt = family.join("1").join("checkpoint.json");
    ok(&["decode", "--checkpoint", s(&ckpt), "--corpus", s(data())]);
    let dump = family.join("1").join("decode.jsonl");
    assert!(dump.exists());
    assert_eq!(manifest_paths(&family.join("1").join("decode.manifest.json")), ["decode.jsonl"]);
    let first: Value = serde_json::from_str(std::fs::read_to_string(&dump).unwrap().lines().next().unwrap()).unwrap();
    for key in ["dialogueId", "turn", "candidates", "chosen", "surface", "reference", "goal"] {
        assert!(first.get(key).is_some(), "{key}");
    }

    // Seed 2 has no dump yet; eval decodes it on the way.
    let res = tmp.path().join("res");
    ok(&["eval", "--corpus", s(data()), "--runs", s(&runs), "--out", s(&res)]);
    assert!(family.join("2").join("decode.jsonl").exists());
    let long = std::fs::read_to_string(res.join("results_long.csv")).unwrap();
    assert_eq!(long.lines().count(), 2);
    assert!(long.lines().nth(1).unwrap().starts_with("lm+att,summary,true,"));
    assert_eq!(
        manifest_paths(&res.join("manifest.json")),
        ["results.csv", "results_long.csv", "results.json"]
    );

    let an = tmp.path().join("an");
    ok(&["analyze", "--corpus", s(data()), "--checkpoint", s(&ckpt), "--out", s(&an), "--turns", "4"]);
    let gates = std::fs::read_to_string(an.join("gates.csv")).unwrap();
    assert_eq!(gates.lines().next().unwrap(), "config,meanI,meanF,meanRoverO");
    let maps: Value = serde_json::from_str(&std::fs::read_to_string(an.join("heatmaps.json")).unwrap()).unwrap();
    assert_eq!(maps.as_array().unwrap().len(), 4);
    for m in maps.as_array().unwrap() {
        assert_eq!(m["rows"].as_array().unwrap().len(), m["tokens"].as_array().unwrap().len());
    }
    let traces: Value = serde_json::from_str(&std::fs::read_to_string(an.join("traces.json")).unwrap()).unwrap();
    assert_eq!(traces.as_array().unwrap().len(), 4);
}

#[test]
fn eval_grid_gives_eight_paired_rows_rederivable_from_dumps() {
    let tmp = TempDir::new().unwrap();
    let res = tmp.path().join("grid");
    let args = ["eval", "--corpus", s(data()), "--out", s(&res), "--grid", "--lr", "0.5", "--max-epochs", "1", "--hidden", "8"];
    ok(&args);
    let table = std::fs::read_to_string(res.join("results.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert_eq!(
        lines[0],
        "arch,belief,success,successSnapshot,slotMatch,slotMatchSnapshot,t5Bleu,t5BleuSnapshot,t1Bleu,t1BleuSnapshot,seedCount"
    );
    let rows: Vec<(&str, &str)> = lines[1..]
        .iter()
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    assert_eq!(
        rows,
        [
            ("lm", "full"),
            ("lm", "summary"),
            ("mem", "summary"),
            ("hybrid", "summary"),
            ("hybrid", "full"),
            ("lm+att", "summary"),
            ("mem+att", "summary"),
            ("hybrid+att", "summary"),
        ]
    );
    let again = tmp.path().join("again");
    ok(&["eval", "--corpus", s(data()), "--runs", s(&res.join("runs")), "--out", s(&again)]);
    for f in ["results.csv", "results_long.csv"] {
        assert_eq!(
            std::fs::read_to_string(res.join(f)).unwrap(),
            std::fs::read_to_string(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let mut outs = Vec::new();
    for k in 0..2 {
        let res = tmp.path().join(format!("r{k}"));
        let mut args = vec!["eval", "--corpus", s(data()), "--out", s(&res), "--variant", "hybrid", "--attention"];
        args.extend(QUICK);
        ok(&args);
        outs.push(res);
    }
    let families = |r: &Path| -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(r.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
        v.sort();
        v
    };
    let (a, b) = (families(&outs[0]), families(&outs[1]));
    assert_eq!(a.len(), 2);
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.file_name(), fb.file_name());
        for f in ["checkpoint.json", "decode.jsonl", "metrics.json"] {
            let read = |d: &Path| std::fs::read(d.join("1").join(f)).unwrap();
            assert!(read(fa) == read(fb), "{f} differs");
        }
    }
    for f in ["results.csv", "results_long.csv"] {
        assert_eq!(
            std::fs::read(outs[0].join(f)).unwrap(),
            std::fs::read(outs[1].join(f)).unwrap()
        );
    }
}

#[test]
fn chat_answers_each_line() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let mut args = vec!["train", "--corpus", s(data()), "--out", s(&runs)];
    args.extend(QUICK);
    ok(&args);
    let ckpt = only_subdir(&runs).join("1").join("checkpoint.json");
    let mut child = bin()
        .args(["chat", "--checkpoint", s(&ckpt), "--skeletal"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"i want cheap food\nin the north\nquit\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("system> ").count(), 2, "{text}");
    assert!(text.contains("skeletal:"));
}

#[test]
fn serve_rejects_a_missing_checkpoint() {
    let out = run(&["serve", "--checkpoint", "/nonexistent/checkpoint.json"]);
    assert_eq!(out.status.code(), Some(2));
}
