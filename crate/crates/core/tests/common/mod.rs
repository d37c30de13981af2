#![allow(dead_code)]

use std::path::PathBuf;

use attnqe::{DeletionMode, ErrorLabels, WordScores};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_json(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(fixture(name)).unwrap()).unwrap()
}

/// Structural equality with numbers compared to `tol`.
pub fn json_close(actual: &Value, expected: &Value, tol: f64, path: &str) -> Result<(), String> {
    match (actual, expected) {
        (Value::Number(a), Value::Number(e)) => {
            let (a, e) = (a.as_f64().unwrap(), e.as_f64().unwrap());
            if (a - e).abs() <= tol {
                Ok(())
            } else {
                Err(format!("{path}: {a} vs {e}"))
            }
        }
        (Value::Array(a), Value::Array(e)) => {
            if a.len() != e.len() {
                return Err(format!("{path}: length {} vs {}", a.len(), e.len()));
            }
            a.iter().zip(e).enumerate().try_for_each(|(i, (a, e))| json_close(a, e, tol, &format!("{path}[{i}]")))
        }
        (Value::Object(a), Value::Object(e)) => e.iter().try_for_each(|(k, ev)| match a.get(k) {
            Some(av) => json_close(av, ev, tol, &format!("{path}.{k}")),
            None => Err(format!("{path}: missing key {k}")),
        }),
        (a, e) if a == e => Ok(()),
        (a, e) => Err(format!("{path}: {a} vs {e}")),
    }
}

/// Scores and labels from a `{utt_id, scores, labels}` fixture.
pub fn metric_instances(name: &str, method: &str) -> (Vec<WordScores>, Vec<ErrorLabels>) {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let id = v["utt_id"].as_str().unwrap().to_owned();
        let s: Vec<f64> = serde_json::from_value(v["scores"].clone()).unwrap();
        let l: Vec<u8> = serde_json::from_value(v["labels"].clone()).unwrap();
        scores.push(WordScores::new(id.clone(), method, s).unwrap());
        labels.push(labels_from(&id, l.iter().map(|&x| x == 1).collect()));
    }
    (scores, labels)
}

pub fn labels_from(utt_id: &str, labels: Vec<bool>) -> ErrorLabels {
    let faulty = labels.iter().filter(|&&b| b).count();
    ErrorLabels {
        utt_id: utt_id.to_owned(),
        n_ref: labels.len(),
        labels,
        substitutions: faulty,
        deletions: 0,
        insertions: 0,
        deletion_mode: DeletionMode::Attach,
    }
}

/// Label-file JSONL for a set of labels.
pub fn label_jsonl(labels: &[ErrorLabels]) -> String {
    attnqe::ingest::to_jsonl(
        labels.iter().map(|l| attnqe::ingest::LabelRecord { labels: l.clone(), words: None }).collect::<Vec<_>>(),
    )
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub attn: PathBuf,
    pub labels: PathBuf,
}

impl Workspace {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Synthetic corpus, planted attention export and label file on disk.
pub fn synthetic_workspace(utterances: usize, with_gradients: bool, seed: u64) -> Workspace {
    use attnqe::synthetic::{error_injected_corpus, label_corpus, planted_export, CorpusOptions, PlantOptions};

    let dir = tempfile::tempdir().unwrap();
    let corpus = error_injected_corpus(&CorpusOptions { utterances, ..Default::default() }, seed);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions { with_gradients, ..Default::default() }, seed + 1);

    let ws = Workspace {
        corpus: dir.path().join("corpus.jsonl"),
        attn: dir.path().join("attn.jsonl"),
        labels: dir.path().join("labels.jsonl"),
        dir,
    };
    std::fs::write(&ws.corpus, attnqe::ingest::to_jsonl(&corpus)).unwrap();
    let export = attnqe::ingest::write_attention_export(&records, attnqe::ingest::TensorEncoding::Base64, None);
    std::fs::write(&ws.attn, export).unwrap();
    let label_lines = attnqe::ingest::to_jsonl(
        labeled.into_iter().map(|(w, l)| attnqe::ingest::LabelRecord { labels: l, words: Some(w) }).collect::<Vec<_>>(),
    );
    std::fs::write(&ws.labels, label_lines).unwrap();
    ws
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_attnqe"))
}

/// Runs the binary, returning (exit code, stdout, stderr).
pub fn run<I, S>(args: I) -> (i32, Vec<u8>, String)
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), out.stdout, String::from_utf8_lossy(&out.stderr).into_owned())
}
