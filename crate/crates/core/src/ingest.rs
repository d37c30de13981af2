//! JSON-lines readers and writers for every on-disk format.
//!
//! Tensor payloads are `{shape, data}` where `data` is either a flat
//! row-major array of numbers or a standard-alphabet, padded base64 string
//! of little-endian `f32`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array3, Array4};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::alignment::Normalizer;
use crate::error::{Error, Result};
use crate::model::{AttentionRecord, DeletionMode, ErrorLabels, Utterance, WordScores};

/// Reads a whole file, or stdin when the path is `-`.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    let io_err = |source| Error::Io { path: path.to_owned(), source };
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(io_err)?;
        Ok(buf)
    } else {
        std::fs::read(path).map_err(io_err)
    }
}

/// Writes to a file, or stdout when the path is `-`.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.as_os_str() == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush()).map_err(Error::Output)
    } else {
        std::fs::write(path, bytes).map_err(Error::Output)
    }
}

/// Parses non-blank lines as JSON values of type `T`, reporting 1-based line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<(usize, T)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::invalid(format!("input is not UTF-8: {e}")))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|source| Error::Json { line: i + 1, source }))
        .collect()
}

/// Serializes items one JSON object per line.
pub fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record types always serialize"));
        out.push('\n');
    }
    out
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::invalid("empty utt_id"));
        }
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_owned()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- corpus

pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<Utterance>> {
    let utts: Vec<Utterance> = parse_jsonl(bytes)?.into_iter().map(|(_, u)| u).collect();
    check_unique(utts.iter().map(|u| u.utt_id.as_str()))?;
    Ok(utts)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Utterance>> {
    parse_corpus(&read_input(path)?)
}

// ---------------------------------------------------------------- tensors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorData {
    Flat(Vec<f32>),
    Base64(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

/// Numeric encoding used when writing tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TensorEncoding {
    #[default]
    Flat,
    Base64,
}

pub fn encode_f32_base64(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32_base64(text: &str) -> std::result::Result<Vec<f32>, String> {
    let bytes = STANDARD.decode(text.trim()).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("{} bytes is not a whole number of f32 values", bytes.len()));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

impl TensorJson {
    pub fn encode(shape: &[usize], values: &[f32], encoding: TensorEncoding) -> Self {
        let data = match encoding {
            TensorEncoding::Flat => TensorData::Flat(values.to_vec()),
            TensorEncoding::Base64 => TensorData::Base64(encode_f32_base64(values)),
        };
        Self { shape: shape.to_vec(), data }
    }

    /// Flat row-major values, checked against the declared shape.
    pub fn decode(&self, utt_id: &str, field: &'static str, rank: usize) -> Result<Vec<f32>> {
        let shape_err = |message: String| Error::Shape { utt_id: utt_id.to_owned(), field, message };
        if self.shape.len() != rank {
            return Err(shape_err(format!("expected rank {rank}, got shape {:?}", self.shape)));
        }
        let values = match &self.data {
            TensorData::Flat(v) => v.clone(),
            TensorData::Base64(s) => decode_f32_base64(s).map_err(|e| shape_err(format!("bad base64: {e}")))?,
        };
        let expected: usize = self.shape.iter().product();
        if values.len() != expected {
            return Err(shape_err(format!(
                "shape {:?} needs {expected} values, data has {}",
                self.shape,
                values.len()
            )));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExportLine {
    utt_id: String,
    tokens: Vec<String>,
    special_mask: Vec<bool>,
    word_spans: Vec<[usize; 2]>,
    attention: TensorJson,
    value_norms: TensorJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gradients: Option<TensorJson>,
}

fn to_array4(utt_id: &str, field: &'static str, t: &TensorJson) -> Result<Array4<f32>> {
    let v = t.decode(utt_id, field, 4)?;
    let s = &t.shape;
    Ok(Array4::from_shape_vec((s[0], s[1], s[2], s[3]), v).expect("length checked in decode"))
}

fn to_array3(utt_id: &str, field: &'static str, t: &TensorJson) -> Result<Array3<f32>> {
    let v = t.decode(utt_id, field, 3)?;
    let s = &t.shape;
    Ok(Array3::from_shape_vec((s[0], s[1], s[2]), v).expect("length checked in decode"))
}

impl ExportLine {
    fn into_record(self) -> Result<AttentionRecord> {
        let id = self.utt_id.as_str();
        let attention = to_array4(id, "attention", &self.attention)?;
        let value_norms = to_array3(id, "value_norms", &self.value_norms)?;
        let gradients = self.gradients.as_ref().map(|g| to_array4(id, "gradients", g)).transpose()?;
        AttentionRecord::new(
            self.utt_id.clone(),
            self.tokens,
            self.special_mask,
            self.word_spans.iter().map(|&[s, e]| s..e).collect(),
            attention,
            value_norms,
            gradients,
        )
    }

    fn from_record(rec: &AttentionRecord, encoding: TensorEncoding) -> Self {
        let flat = |a: &[f32]| a.to_vec();
        let attention: Vec<f32> = rec.attention.iter().copied().collect();
        let norms: Vec<f32> = rec.value_norms.iter().copied().collect();
        Self {
            utt_id: rec.utt_id.clone(),
            tokens: rec.tokens.clone(),
            special_mask: rec.special_mask.clone(),
            word_spans: rec.word_spans.iter().map(|r| [r.start, r.end]).collect(),
            attention: TensorJson::encode(rec.attention.shape(), &flat(&attention), encoding),
            value_norms: TensorJson::encode(rec.value_norms.shape(), &norms, encoding),
            gradients: rec.gradients.as_ref().map(|g| {
                let v: Vec<f32> = g.iter().copied().collect();
                TensorJson::encode(g.shape(), &v, encoding)
            }),
        }
    }
}

/// An attention export: optional metadata header line plus records.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport {
    pub header: Option<Value>,
    pub records: Vec<AttentionRecord>,
}

/// Parses and fully validates an export. A line of the form
/// `{"header": {...}}` carries exporter metadata and is kept aside.
pub fn parse_attention_export(bytes: &[u8]) -> Result<AttentionExport> {
    let mut header = None;
    let mut records = Vec::new();
    for (line, value) in parse_jsonl::<Value>(bytes)? {
        if value.get("utt_id").is_none() {
            if let Some(h) = value.get("header") {
                header = Some(h.clone());
                continue;
            }
        }
        let parsed: ExportLine = serde_json::from_value(value).map_err(|source| Error::Json { line, source })?;
        records.push(parsed.into_record()?);
    }
    check_unique(records.iter().map(|r| r.utt_id.as_str()))?;
    Ok(AttentionExport { header, records })
}

pub fn read_attention_export(path: &Path) -> Result<Vec<AttentionRecord>> {
    Ok(parse_attention_export(&read_input(path)?)?.records)
}

pub fn write_attention_export(records: &[AttentionRecord], encoding: TensorEncoding, header: Option<&Value>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&to_jsonl([serde_json::json!({ "header": h })]));
    }
    out.push_str(&to_jsonl(records.iter().map(|r| ExportLine::from_record(r, encoding))));
    out
}

// ---------------------------------------------------------------- confidences

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfidenceLine {
    utt_id: String,
    word_confidences: Vec<f64>,
}

/// Per-word ASR confidences keyed by utterance, checked against the corpus.
pub fn parse_confidences(
    bytes: &[u8],
    corpus: &[Utterance],
    normalizer: &Normalizer,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let word_counts: BTreeMap<&str, usize> =
        corpus.iter().map(|u| (u.utt_id.as_str(), normalizer.words(&u.hyp_text).len())).collect();
    let mut out = BTreeMap::new();
    for (_, line) in parse_jsonl::<ConfidenceLine>(bytes)? {
        let expected =
            *word_counts.get(line.utt_id.as_str()).ok_or_else(|| Error::UnknownId(line.utt_id.clone(), "corpus"))?;
        if line.word_confidences.len() != expected {
            return Err(Error::LengthMismatch {
                utt_id: line.utt_id,
                field: "word_confidences",
                expected,
                found: line.word_confidences.len(),
            });
        }
        if let Some(&bad) = line.word_confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Range { utt_id: line.utt_id, field: "word_confidences", value: bad });
        }
        if out.insert(line.utt_id.clone(), line.word_confidences).is_some() {
            return Err(Error::DuplicateId(line.utt_id));
        }
    }
    Ok(out)
}

pub fn read_confidences(path: &Path, corpus: &[Utterance]) -> Result<BTreeMap<String, Vec<f64>>> {
    parse_confidences(&read_input(path)?, corpus, &Normalizer::default())
}

// ---------------------------------------------------------------- labels

/// One line of a label file: labels plus the hypothesis words they refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub labels: ErrorLabels,
    pub words: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelLine {
    utt_id: String,
    labels: Vec<u8>,
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "I")]
    i: usize,
    n_ref: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    words: Option<Vec<String>>,
    #[serde(default)]
    deletions: DeletionMode,
}

impl Serialize for LabelRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let l = &self.labels;
        LabelLine {
            utt_id: l.utt_id.clone(),
            labels: l.labels.iter().map(|&b| u8::from(b)).collect(),
            s: l.substitutions,
            d: l.deletions,
            i: l.insertions,
            n_ref: l.n_ref,
            words: self.words.clone(),
            deletions: l.deletion_mode,
        }
        .serialize(s)
    }
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (line, l) in parse_jsonl::<LabelLine>(bytes)? {
        if let Some(bad) = l.labels.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("line {line}: {}: label {bad} is not 0 or 1", l.utt_id)));
        }
        if let Some(w) = &l.words {
            if w.len() != l.labels.len() {
                return Err(Error::LengthMismatch {
                    utt_id: l.utt_id,
                    field: "words",
                    expected: l.labels.len(),
                    found: w.len(),
                });
            }
        }
        out.push(LabelRecord {
            labels: ErrorLabels {
                utt_id: l.utt_id,
                labels: l.labels.iter().map(|&v| v == 1).collect(),
                substitutions: l.s,
                deletions: l.d,
                insertions: l.i,
                n_ref: l.n_ref,
                deletion_mode: l.deletions,
            },
            words: l.words,
        });
    }
    check_unique(out.iter().map(|r| r.labels.utt_id.as_str()))?;
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    parse_labels(&read_input(path)?)
}

// ---------------------------------------------------------------- scores

pub fn parse_scores(bytes: &[u8]) -> Result<Vec<WordScores>> {
    let mut out = Vec::new();
    for (_, ws) in parse_jsonl::<WordScores>(bytes)? {
        out.push(WordScores::new(ws.utt_id, ws.method, ws.scores)?);
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<WordScores>> {
    parse_scores(&read_input(path)?)
}
