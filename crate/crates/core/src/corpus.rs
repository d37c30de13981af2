//! Dataset-level analysis: per-word-type error frequency against mean score.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordRow {
    pub word: String,
    pub occurrence_count: usize,
    pub error_count: usize,
    pub error_rate: f64,
    pub mean_attention: f64,
}

/// One utterance's contribution: hypothesis words with their scores and labels.
#[derive(Debug, Clone, Copy)]
pub struct AnnotatedUtterance<'a> {
    pub utt_id: &'a str,
    pub words: &'a [String],
    pub scores: &'a [f64],
    pub labels: &'a [bool],
}

#[derive(Debug, Default, Clone)]
struct Tally {
    occurrences: usize,
    errors: usize,
    score_sum: f64,
}

/// Accumulates counts and score sums per word type, then divides once.
///
/// Rows are ordered by error count (descending), then occurrence count
/// (descending), then word.
pub fn build_word_table(utterances: &[AnnotatedUtterance<'_>], min_occurrences: usize) -> Result<Vec<WordRow>> {
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    for u in utterances {
        if u.scores.len() != u.words.len() || u.labels.len() != u.words.len() {
            return Err(Error::LengthMismatch {
                utt_id: u.utt_id.to_owned(),
                field: if u.scores.len() != u.words.len() { "scores" } else { "labels" },
                expected: u.words.len(),
                found: if u.scores.len() != u.words.len() { u.scores.len() } else { u.labels.len() },
            });
        }
        for ((word, &score), &faulty) in u.words.iter().zip(u.scores).zip(u.labels) {
            let t = tallies.entry(word.as_str()).or_default();
            t.occurrences += 1;
            t.errors += usize::from(faulty);
            t.score_sum += score;
        }
    }

    let mut rows: Vec<WordRow> = tallies
        .into_iter()
        .filter(|(_, t)| t.occurrences >= min_occurrences.max(1))
        .map(|(w, t)| WordRow {
            word: w.to_owned(),
            occurrence_count: t.occurrences,
            error_count: t.errors,
            error_rate: t.errors as f64 / t.occurrences as f64,
            mean_attention: t.score_sum / t.occurrences as f64,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.error_count
            .cmp(&a.error_count)
            .then(b.occurrence_count.cmp(&a.occurrence_count))
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(rows)
}

/// Which column of the word table is correlated with mean attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    #[default]
    ErrorCount,
    ErrorRate,
}

impl Target {
    pub fn tag(self) -> &'static str {
        match self {
            Target::ErrorCount => "error_count",
            Target::ErrorRate => "error_rate",
        }
    }

    pub fn column(self, rows: &[WordRow]) -> Vec<f64> {
        rows.iter()
            .map(|r| match self {
                Target::ErrorCount => r.error_count as f64,
                Target::ErrorRate => r.error_rate,
            })
            .collect()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" | "error_count" => Ok(Target::ErrorCount),
            "rate" | "error_rate" => Ok(Target::ErrorRate),
            _ => Err(Error::invalid(format!("unknown correlation target {s:?}, expected count or rate"))),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

/// Correlation coefficients; `None` where undefined (constant column, < 2 rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlations {
    pub pearson: Option<f64>,
    pub kendall: Option<f64>,
    pub spearman: Option<f64>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = r;
        }
        i = j;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&midranks(x), &midranks(y))
}

/// Kendall tau-b, O(n^2) pair enumeration.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_x, mut tied_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal);
            let dy = y[i].partial_cmp(&y[j]).unwrap_or(Ordering::Equal);
            match (dx, dy) {
                (Ordering::Equal, Ordering::Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Ordering::Equal, _) => tied_x += 1,
                (_, Ordering::Equal) => tied_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - tied_x) as f64) * ((pairs - tied_y) as f64)).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

pub fn correlations(rows: &[WordRow], target: Target) -> Correlations {
    let attention: Vec<f64> = rows.iter().map(|r| r.mean_attention).collect();
    let y = target.column(rows);
    Correlations {
        pearson: pearson(&attention, &y),
        kendall: kendall_tau_b(&attention, &y),
        spearman: spearman(&attention, &y),
    }
}

/// The `top_n` words with the highest mean score.
///
/// Ties go to the word seen more often, then to lexicographic order.
pub fn error_prone_words(rows: &[WordRow], top_n: usize) -> Vec<WordRow> {
    let mut ranked = rows.to_vec();
    ranked.sort_by(|a, b| {
        b.mean_attention
            .total_cmp(&a.mean_attention)
            .then(b.occurrence_count.cmp(&a.occurrence_count))
            .then_with(|| a.word.cmp(&b.word))
    });
    ranked.truncate(top_n);
    ranked
}

/// CSV rendering of the word table with a header row.
pub fn word_table_csv(rows: &[WordRow]) -> String {
    let mut out = String::from("word,occurrence_count,error_count,error_rate,mean_attention\n");
    for r in rows {
        let word = if r.word.contains([',', '"', '\n']) {
            format!("\"{}\"", r.word.replace('"', "\"\""))
        } else {
            r.word.clone()
        };
        out.push_str(&format!(
            "{word},{},{},{},{}\n",
            r.occurrence_count, r.error_count, r.error_rate, r.mean_attention
        ));
    }
    out
}
