//! Ranking and top-k classification metrics for word error scores.
//!
//! Top-k metrics are computed on exact rationals and converted to `f64`
//! once, so support-weighted recall and accuracy come out bit-identical.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ErrorLabels, InstanceMetrics, WordScores};

type Q = Ratio<u128>;

/// How many top-scoring words are flagged as errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KPolicy {
    Fixed(usize),
    /// 10% of the sentence length, rounded up, at least 1.
    Dynamic,
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::Fixed(k) => write!(f, "{k}"),
            KPolicy::Dynamic => f.write_str("dyn"),
        }
    }
}

impl FromStr for KPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dyn" | "dynamic" => Ok(KPolicy::Dynamic),
            n => match n.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(KPolicy::Fixed(k)),
                _ => Err(Error::invalid(format!("k must be `dyn` or a positive integer, got {s:?}"))),
            },
        }
    }
}

impl Serialize for KPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub fn select_k(num_words: usize, policy: KPolicy) -> Result<usize> {
    if num_words == 0 {
        return Err(Error::invalid("cannot select k for an empty sentence"));
    }
    let k = match policy {
        KPolicy::Fixed(k) => k,
        KPolicy::Dynamic => num_words.div_ceil(10).max(1),
    };
    Ok(k.min(num_words))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopKMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
}

/// Indices of words ordered by descending score; ties keep the lower index first.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn q(num: usize, den: usize) -> Q {
    if den == 0 {
        Q::from_integer(0)
    } else {
        Q::new(num as u128, den as u128)
    }
}

fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Flags the `k` highest-scoring words as faulty and scores that prediction.
///
/// Precision, recall and F1 are per class (faulty, correct) and averaged with
/// weights equal to class support; a class without support has weight 0.
/// Balanced accuracy is the mean recall over classes that have support.
pub fn topk_metrics(scores: &[f64], labels: &[bool], k: usize) -> TopKMetrics {
    let n = labels.len();
    assert_eq!(scores.len(), n, "scores and labels must align");
    assert!(n >= 1 && (1..=n).contains(&k), "k must be in 1..=len");

    let mut predicted = vec![false; n];
    for &i in rank_desc(scores).iter().take(k) {
        predicted[i] = true;
    }

    // per class: (true positives, predicted count, support)
    let mut classes = [(0usize, 0usize, 0usize); 2];
    for (&truth, &pred) in labels.iter().zip(&predicted) {
        let c = &mut classes[usize::from(truth)];
        c.2 += 1;
        if truth == pred {
            c.0 += 1;
        }
        classes[usize::from(pred)].1 += 1;
    }

    let total = Q::from_integer(n as u128);
    let mut recall = Q::from_integer(0);
    let mut precision = Q::from_integer(0);
    let mut f1 = Q::from_integer(0);
    let mut balanced = Q::from_integer(0);
    let mut present = 0u128;
    let mut correct = 0;
    for &(tp, pred, support) in &classes {
        correct += tp;
        if support == 0 {
            continue;
        }
        let weight = q(support, n);
        recall += weight * q(tp, support);
        precision += weight * q(tp, pred);
        f1 += weight * q(2 * tp, pred + support);
        balanced += q(tp, support);
        present += 1;
    }
    let accuracy = Q::from_integer(correct as u128) / total;
    debug_assert_eq!(recall, accuracy);

    TopKMetrics {
        recall: to_f64(recall),
        precision: to_f64(precision),
        f1: to_f64(f1),
        accuracy: to_f64(accuracy),
        balanced_accuracy: to_f64(balanced / Q::from_integer(present)),
    }
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Midrank (Mann-Whitney) ROC AUC. `None` for one-class labels.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: the tied block i..j shares rank (i + 1 + j) / 2
        let midrank = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += midrank * order[i..j].iter().filter(|&&w| labels[w]).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise average precision over descending unique score thresholds.
/// `None` when there are no positive labels.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return None;
    }
    let order = rank_desc(scores);
    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut gained = 0;
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            gained += usize::from(labels[order[j]]);
            j += 1;
        }
        tp += gained;
        seen += j - i;
        if gained > 0 {
            ap += (gained as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Some(ap)
}

/// Every metric for one utterance. Fails on an empty sentence.
pub fn evaluate_instance(utt_id: &str, scores: &[f64], labels: &[bool], policy: KPolicy) -> Result<InstanceMetrics> {
    let k = select_k(labels.len(), policy)?;
    let top = topk_metrics(scores, labels, k);
    assert_eq!(top.recall, top.accuracy, "{utt_id}: weighted recall must equal accuracy");
    let (pos, neg) = class_counts(labels);
    let degenerate = pos == 0 || neg == 0;
    Ok(InstanceMetrics {
        utt_id: utt_id.to_owned(),
        k_used: k,
        recall_k: top.recall,
        precision_k: top.precision,
        f1_k: top.f1,
        accuracy_k: top.accuracy,
        balanced_accuracy_k: top.balanced_accuracy,
        auc: if degenerate { None } else { auc(scores, labels) },
        ap: if degenerate { None } else { average_precision(scores, labels) },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub recall_k: f64,
    pub precision_k: f64,
    pub f1_k: f64,
    pub accuracy_k: f64,
    pub balanced_accuracy_k: f64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
}

/// Corpus-level summary for one scoring method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub k: KPolicy,
    pub instances: usize,
    pub skipped_empty: usize,
    pub skipped_degenerate: usize,
    #[serde(rename = "macro")]
    pub macro_avg: Option<MacroMetrics>,
    pub per_instance: Vec<InstanceMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Macro averages. Sums run in `utt_id` order so input order never matters.
pub fn macro_average(per_instance: &[InstanceMetrics]) -> Option<MacroMetrics> {
    let mut sorted: Vec<&InstanceMetrics> = per_instance.iter().collect();
    sorted.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let avg = |f: fn(&InstanceMetrics) -> f64| mean(sorted.iter().map(|m| f(m)));
    Some(MacroMetrics {
        recall_k: avg(|m| m.recall_k)?,
        precision_k: avg(|m| m.precision_k)?,
        f1_k: avg(|m| m.f1_k)?,
        accuracy_k: avg(|m| m.accuracy_k)?,
        balanced_accuracy_k: avg(|m| m.balanced_accuracy_k)?,
        auc: mean(sorted.iter().filter_map(|m| m.auc)),
        ap: mean(sorted.iter().filter_map(|m| m.ap)),
    })
}

/// Evaluates scores against labels, one report per method tag (first-seen order).
///
/// Every scored utterance must have labels of the same length. Utterances
/// with no words are skipped and counted; one-class utterances still get
/// top-k metrics but no AUC/AP.
pub fn evaluate_corpus(scores: &[WordScores], labels: &[ErrorLabels], policy: KPolicy) -> Result<Vec<MethodReport>> {
    if scores.is_empty() {
        return Err(Error::invalid("no scored utterances to evaluate"));
    }
    let mut by_id: HashMap<&str, &ErrorLabels> = HashMap::with_capacity(labels.len());
    for l in labels {
        if by_id.insert(&l.utt_id, l).is_some() {
            return Err(Error::DuplicateId(l.utt_id.clone()));
        }
    }

    let mut reports: Vec<MethodReport> = Vec::new();
    let mut seen: HashMap<(&str, &str), ()> = HashMap::new();
    for ws in scores {
        if seen.insert((&ws.method, &ws.utt_id), ()).is_some() {
            return Err(Error::DuplicateId(ws.utt_id.clone()));
        }
        let lab = by_id.get(ws.utt_id.as_str()).ok_or_else(|| Error::UnknownId(ws.utt_id.clone(), "labels"))?;
        if lab.len() != ws.len() {
            return Err(Error::LengthMismatch {
                utt_id: ws.utt_id.clone(),
                field: "scores",
                expected: lab.len(),
                found: ws.len(),
            });
        }
        let idx = match reports.iter().position(|r| r.method == ws.method) {
            Some(i) => i,
            None => {
                reports.push(MethodReport {
                    method: ws.method.clone(),
                    k: policy,
                    instances: 0,
                    skipped_empty: 0,
                    skipped_degenerate: 0,
                    macro_avg: None,
                    per_instance: Vec::new(),
                });
                reports.len() - 1
            }
        };
        let report = &mut reports[idx];
        if ws.is_empty() {
            report.skipped_empty += 1;
            continue;
        }
        let m = evaluate_instance(&ws.utt_id, &ws.scores, &lab.labels, policy)?;
        if m.auc.is_none() {
            report.skipped_degenerate += 1;
        }
        report.instances += 1;
        report.per_instance.push(m);
    }
    for r in &mut reports {
        r.macro_avg = macro_average(&r.per_instance);
    }
    Ok(reports)
}

/// Error scores from per-word ASR confidences: `1 - confidence`.
pub fn confidence_baseline(utt_id: &str, confidences: &[f64], source: &str) -> Result<WordScores> {
    if let Some(&bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Range { utt_id: utt_id.to_owned(), field: "word_confidences", value: bad });
    }
    WordScores::new(utt_id, source, confidences.iter().map(|c| 1.0 - c).collect())
}

/// Uniform `[0, 1)` scores from a seeded ChaCha stream.
pub fn random_baseline(utt_id: &str, num_words: usize, seed: u64) -> WordScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..num_words).map(|_| rng.gen::<f64>()).collect();
    WordScores { utt_id: utt_id.to_owned(), method: "random".to_owned(), scores }
}

/// Per-utterance seed mixing the corpus seed with the utterance id (FNV-1a),
/// so scores do not depend on corpus order.
pub fn utterance_seed(seed: u64, utt_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in utt_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
