//! End-to-end workflows behind the command-line subcommands.
//!
//! Each workflow is a pure function of its input files and options and
//! returns the bytes to write, so repeated runs are byte-identical.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregation::score_utterance;
use crate::alignment::{label_pair, Normalizer};
use crate::corpus::{self, AnnotatedUtterance, Correlations, Target, WordRow};
use crate::error::{Error, Result};
use crate::ingest::{self, to_jsonl, LabelRecord};
use crate::metrics::{self, KPolicy, MacroMetrics, MethodReport};
use crate::model::{AggregationConfig, AttentionRecord, DeletionMode, ErrorLabels, Utterance, WordScores};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A fully-read input file and its digest.
#[derive(Debug, Clone)]
pub struct Input {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_owned();
        let bytes = ingest::read_input(&path)?;
        Ok(Self { path, bytes })
    }

    pub fn from_bytes(name: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) -> Self {
        Self { path: name.into(), bytes: bytes.into() }
    }

    fn digest(&self) -> InputDigest {
        InputDigest {
            path: self.path.display().to_string(),
            sha256: format!("{:x}", Sha256::digest(&self.bytes)),
            bytes: self.bytes.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Self-description embedded in every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: BTreeMap<&'static str, String>,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    fn new(command: &'static str, inputs: &[&Input]) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            config: BTreeMap::new(),
            inputs: inputs.iter().map(|i| i.digest()).collect(),
        }
    }

    fn with(mut self, key: &'static str, value: impl ToString) -> Self {
        self.config.insert(key, value.to_string());
        self
    }
}

/// Method conventions that the numbers in a report depend on.
#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub scaling_order: &'static str,
    pub token_importance: &'static str,
    pub q3: &'static str,
    pub gradient_sign: &'static str,
    pub dynamic_k: &'static str,
    pub topk_ties: &'static str,
    pub degenerate_instances: &'static str,
    pub deletions: String,
}

impl Conventions {
    fn new(deletions: String) -> Self {
        Self {
            scaling_order: "scaling applied per layer and head, then averaged",
            token_importance: "mean over other non-special tokens, diagonal excluded",
            q3: "0.75 quantile, linear interpolation",
            gradient_sign: "absolute value of attention * value norm * gradient",
            dynamic_k: "max(1, ceil(n / 10)), capped at n",
            topk_ties: "lower word index first",
            degenerate_instances: "one-class instances excluded from AUC/AP, kept for top-k",
            deletions,
        }
    }
}

fn deletion_summary(labels: &[ErrorLabels]) -> String {
    let mut modes: Vec<&str> = labels.iter().map(|l| l.deletion_mode.tag()).collect();
    modes.sort_unstable();
    modes.dedup();
    match modes.as_slice() {
        [] => "none".into(),
        [one] => (*one).into(),
        _ => "mixed".into(),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

/// Output bytes plus an optional one-line human summary for stderr.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub body: String,
    pub summary: Option<String>,
}

impl CommandOutput {
    fn body(body: String) -> Self {
        Self { body, summary: None }
    }
}

// ------------------------------------------------------------------ label

/// Where hypotheses and references come from.
#[derive(Debug, Clone)]
pub enum LabelSource {
    /// One corpus file whose lines carry both `hyp` and `ref`.
    Corpus(Input),
    /// Separate hypothesis corpus and reference file (`{utt_id, ref}` lines).
    Split { hyps: Input, refs: Input },
}

#[derive(Debug, Clone)]
pub struct LabelOptions {
    pub deletions: DeletionMode,
    pub normalizer: Normalizer,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self { deletions: DeletionMode::Attach, normalizer: Normalizer::default() }
    }
}

#[derive(serde::Deserialize)]
struct RefLine {
    utt_id: String,
    #[serde(rename = "ref")]
    reference: String,
}

/// Labels every hypothesis word against its reference.
pub fn label_records(corpus: &[Utterance], opts: &LabelOptions) -> Result<Vec<LabelRecord>> {
    let missing: Vec<&str> = corpus.iter().filter(|u| u.ref_text.is_none()).map(|u| u.utt_id.as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingReference(missing.join(", ")));
    }
    Ok(corpus
        .iter()
        .map(|u| {
            let reference = u.ref_text.as_deref().expect("checked above");
            let (words, labels) = label_pair(&u.utt_id, reference, &u.hyp_text, &opts.normalizer, opts.deletions);
            LabelRecord { labels, words: Some(words) }
        })
        .collect())
}

pub fn cmd_label(source: &LabelSource, opts: &LabelOptions) -> Result<CommandOutput> {
    let corpus = match source {
        LabelSource::Corpus(input) => ingest::parse_corpus(&input.bytes)?,
        LabelSource::Split { hyps, refs } => {
            let mut corpus = ingest::parse_corpus(&hyps.bytes)?;
            let mut by_id: HashMap<String, String> = HashMap::new();
            for (_, r) in ingest::parse_jsonl::<RefLine>(&refs.bytes)? {
                if by_id.insert(r.utt_id.clone(), r.reference).is_some() {
                    return Err(Error::DuplicateId(r.utt_id));
                }
            }
            for u in &mut corpus {
                u.ref_text = by_id.remove(&u.utt_id);
            }
            corpus
        }
    };
    let records = label_records(&corpus, opts)?;
    let (edits, n_ref) = records.iter().fold((0, 0), |(e, n), r| (e + r.labels.edits(), n + r.labels.n_ref));
    let wer = if n_ref > 0 { edits as f64 / n_ref as f64 } else { 0.0 };
    let faulty: usize = records.iter().map(|r| r.labels.faulty_count()).sum();
    Ok(CommandOutput {
        body: to_jsonl(&records),
        summary: Some(format!(
            "{} utterances, corpus WER {wer:.4} ({edits}/{n_ref}), {faulty} faulty hypothesis words, deletions={}",
            records.len(),
            opts.deletions
        )),
    })
}

// ------------------------------------------------------------------ score

/// Scores every record; fails up front if the config needs gradients that
/// some record lacks.
pub fn score_records(records: &[AttentionRecord], config: &AggregationConfig) -> Result<Vec<WordScores>> {
    if config.scaling.needs_gradients() {
        if let Some(r) = records.iter().find(|r| r.gradients.is_none()) {
            return Err(Error::MissingGradients(r.utt_id.clone()));
        }
    }
    records.par_iter().map(|r| score_utterance(r, config)).collect()
}

pub fn cmd_score(attn: &Input, config: &AggregationConfig) -> Result<CommandOutput> {
    let export = ingest::parse_attention_export(&attn.bytes)?;
    let scores = score_records(&export.records, config)?;
    Ok(CommandOutput::body(to_jsonl(&scores)))
}

// ------------------------------------------------------------------ baselines

#[derive(Debug, Clone)]
pub enum BaselineKind {
    /// `1 - confidence`, tagged with the confidence source name.
    Confidence {
        confidences: Input,
        source: String,
    },
    Random {
        seed: u64,
    },
}

pub fn cmd_baseline(corpus: &Input, kind: &BaselineKind) -> Result<CommandOutput> {
    let utts = ingest::parse_corpus(&corpus.bytes)?;
    let norm = Normalizer::default();
    let scores: Vec<WordScores> = match kind {
        BaselineKind::Confidence { confidences, source } => {
            let conf = ingest::parse_confidences(&confidences.bytes, &utts, &norm)?;
            utts.iter()
                .filter_map(|u| conf.get(&u.utt_id).map(|c| metrics::confidence_baseline(&u.utt_id, c, source)))
                .collect::<Result<_>>()?
        }
        BaselineKind::Random { seed } => utts
            .iter()
            .map(|u| {
                let n = norm.words(&u.hyp_text).len();
                metrics::random_baseline(&u.utt_id, n, metrics::utterance_seed(*seed, &u.utt_id))
            })
            .collect(),
    };
    Ok(CommandOutput::body(to_jsonl(&scores)))
}

// ------------------------------------------------------------------ evaluate

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub provenance: Provenance,
    pub conventions: Conventions,
    pub methods: Vec<MethodReport>,
}

pub fn evaluate(scores: &[WordScores], labels: &[ErrorLabels], k: KPolicy) -> Result<Vec<MethodReport>> {
    metrics::evaluate_corpus(scores, labels, k)
}

pub fn cmd_evaluate(scores: &Input, labels: &Input, k: KPolicy) -> Result<CommandOutput> {
    let ws = ingest::parse_scores(&scores.bytes)?;
    let label_recs: Vec<ErrorLabels> = ingest::parse_labels(&labels.bytes)?.into_iter().map(|r| r.labels).collect();
    let methods = evaluate(&ws, &label_recs, k)?;
    let summary = methods
        .iter()
        .map(|m| match &m.macro_avg {
            Some(a) => format!(
                "{}: F1@k {:.4} AUC {} AP {} ({} instances, {} one-class, {} empty)",
                m.method,
                a.f1_k,
                fmt_opt(a.auc),
                fmt_opt(a.ap),
                m.instances,
                m.skipped_degenerate,
                m.skipped_empty
            ),
            None => format!("{}: no evaluable instances", m.method),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let report = EvaluationReport {
        provenance: Provenance::new("evaluate", &[scores, labels]).with("k", k),
        conventions: Conventions::new(deletion_summary(&label_recs)),
        methods,
    };
    Ok(CommandOutput { body: to_json(&report), summary: Some(summary) })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

// ------------------------------------------------------------------ ablate

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub method: String,
    pub f1_k: Option<f64>,
    pub instances: usize,
    pub skipped_empty: usize,
    pub skipped_degenerate: usize,
    #[serde(rename = "macro")]
    pub macro_avg: Option<MacroMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub provenance: Provenance,
    pub conventions: Conventions,
    pub grid_size: usize,
    pub rows: Vec<AblationRow>,
}

/// Runs every aggregation config and evaluates it; rows sorted by F1@k
/// descending, grid order on ties.
pub fn ablate(records: &[AttentionRecord], labels: &[ErrorLabels], k: KPolicy) -> Result<Vec<AblationRow>> {
    let with_grads = !records.is_empty() && records.iter().all(|r| r.gradients.is_some());
    let mut rows = Vec::new();
    for cfg in AggregationConfig::grid(with_grads) {
        let scores = score_records(records, &cfg)?;
        let report =
            metrics::evaluate_corpus(&scores, labels, k)?.into_iter().next().expect("one method per grid cell");
        rows.push(AblationRow {
            method: cfg.tag(),
            f1_k: report.macro_avg.as_ref().map(|m| m.f1_k),
            instances: report.instances,
            skipped_empty: report.skipped_empty,
            skipped_degenerate: report.skipped_degenerate,
            macro_avg: report.macro_avg,
        });
    }
    rows.sort_by(|a, b| {
        let fa = a.f1_k.unwrap_or(f64::NEG_INFINITY);
        let fb = b.f1_k.unwrap_or(f64::NEG_INFINITY);
        fb.total_cmp(&fa)
    });
    Ok(rows)
}

pub fn cmd_ablate(attn: &Input, labels: &Input, k: KPolicy) -> Result<CommandOutput> {
    let records = ingest::parse_attention_export(&attn.bytes)?.records;
    let label_recs: Vec<ErrorLabels> = ingest::parse_labels(&labels.bytes)?.into_iter().map(|r| r.labels).collect();
    let rows = ablate(&records, &label_recs, k)?;
    let summary =
        rows.iter().map(|r| format!("{:<24} F1@k {}", r.method, fmt_opt(r.f1_k))).collect::<Vec<_>>().join("\n");
    let report = AblationReport {
        provenance: Provenance::new("ablate", &[attn, labels]).with("k", k),
        conventions: Conventions::new(deletion_summary(&label_recs)),
        grid_size: rows.len(),
        rows,
    };
    Ok(CommandOutput { body: to_json(&report), summary: Some(summary) })
}

// ------------------------------------------------------------------ corpus

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub target: Target,
    pub min_occurrences: usize,
    pub top_n: usize,
    /// Restrict to one method tag when the score file mixes several.
    pub method: Option<String>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { target: Target::ErrorCount, min_occurrences: 2, top_n: 20, method: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusParams {
    pub target: Target,
    pub min_occurrences: usize,
    pub top_n: usize,
    pub method: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationsByTarget {
    pub error_count: Correlations,
    pub error_rate: Correlations,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusAnalysis {
    pub provenance: Provenance,
    pub params: CorpusParams,
    pub word_table: Vec<WordRow>,
    pub correlations: Correlations,
    pub correlations_by_target: CorrelationsByTarget,
    pub error_prone_words: Vec<WordRow>,
}

/// Word table and correlations for one scoring method.
#[derive(Debug, Clone)]
pub struct CorpusFindings {
    pub method: String,
    pub word_table: Vec<WordRow>,
    /// Correlations against the requested target.
    pub correlations: Correlations,
    pub by_target: CorrelationsByTarget,
    pub error_prone_words: Vec<WordRow>,
}

/// Joins scores, labels and hypothesis words into the word table and its
/// correlations. `words` maps utt_id to normalized hypothesis words.
pub fn analyze_corpus(
    scores: &[WordScores],
    labels: &[ErrorLabels],
    words: &HashMap<String, Vec<String>>,
    opts: &CorpusOptions,
) -> Result<CorpusFindings> {
    let mut methods: Vec<&str> = scores.iter().map(|s| s.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let method = match (&opts.method, methods.as_slice()) {
        (Some(m), _) if methods.contains(&m.as_str()) => m.clone(),
        (Some(m), _) => return Err(Error::invalid(format!("method {m:?} not present in scores"))),
        (None, [one]) => (*one).to_owned(),
        (None, []) => return Err(Error::invalid("score file is empty")),
        (None, many) => return Err(Error::invalid(format!("scores mix methods {many:?}; choose one with --method"))),
    };
    let by_id: HashMap<&str, &ErrorLabels> = labels.iter().map(|l| (l.utt_id.as_str(), l)).collect();
    let mut annotated = Vec::new();
    for ws in scores.iter().filter(|s| s.method == method) {
        let lab = by_id.get(ws.utt_id.as_str()).ok_or_else(|| Error::UnknownId(ws.utt_id.clone(), "labels"))?;
        let w = words.get(&ws.utt_id).ok_or_else(|| Error::UnknownId(ws.utt_id.clone(), "hypothesis words"))?;
        annotated.push(AnnotatedUtterance { utt_id: &ws.utt_id, words: w, scores: &ws.scores, labels: &lab.labels });
    }
    let table = corpus::build_word_table(&annotated, opts.min_occurrences)?;
    let both = CorrelationsByTarget {
        error_count: corpus::correlations(&table, Target::ErrorCount),
        error_rate: corpus::correlations(&table, Target::ErrorRate),
    };
    let chosen = match opts.target {
        Target::ErrorCount => both.error_count,
        Target::ErrorRate => both.error_rate,
    };
    Ok(CorpusFindings {
        method,
        error_prone_words: corpus::error_prone_words(&table, opts.top_n),
        word_table: table,
        correlations: chosen,
        by_target: both,
    })
}

/// Returns the JSON report and the word table as CSV.
pub fn cmd_corpus(
    scores: &Input,
    labels: &Input,
    corpus_file: Option<&Input>,
    opts: &CorpusOptions,
) -> Result<(CommandOutput, String)> {
    let ws = ingest::parse_scores(&scores.bytes)?;
    let label_recs = ingest::parse_labels(&labels.bytes)?;
    let mut words: HashMap<String, Vec<String>> = HashMap::new();
    if let Some(c) = corpus_file {
        let norm = Normalizer::default();
        for u in ingest::parse_corpus(&c.bytes)? {
            words.insert(u.utt_id.clone(), norm.words(&u.hyp_text));
        }
    }
    for r in &label_recs {
        if let Some(w) = &r.words {
            words.entry(r.labels.utt_id.clone()).or_insert_with(|| w.clone());
        }
    }
    let plain: Vec<ErrorLabels> = label_recs.into_iter().map(|r| r.labels).collect();
    let found = analyze_corpus(&ws, &plain, &words, opts)?;
    let correlations = found.correlations;

    let mut inputs = vec![scores, labels];
    inputs.extend(corpus_file);
    let report = CorpusAnalysis {
        provenance: Provenance::new("corpus", &inputs)
            .with("target", opts.target)
            .with("min_occurrences", opts.min_occurrences)
            .with("top_n", opts.top_n),
        params: CorpusParams {
            target: opts.target,
            min_occurrences: opts.min_occurrences,
            top_n: opts.top_n,
            method: found.method,
        },
        correlations,
        correlations_by_target: found.by_target,
        error_prone_words: found.error_prone_words,
        word_table: found.word_table,
    };
    let summary = format!(
        "{} word types, pearson {} kendall {} spearman {} (target {})",
        report.word_table.len(),
        fmt_opt(correlations.pearson),
        fmt_opt(correlations.kendall),
        fmt_opt(correlations.spearman),
        opts.target
    );
    let csv = corpus::word_table_csv(&report.word_table);
    Ok((CommandOutput { body: to_json(&report), summary: Some(summary) }, csv))
}
