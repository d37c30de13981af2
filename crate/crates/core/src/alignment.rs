//! Word-level Levenshtein alignment and faulty-word labeling.

use serde::{Deserialize, Serialize};

use crate::model::{DeletionMode, ErrorLabels};

/// Text normalization applied to both hypotheses and references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalizer {
    pub lowercase: bool,
    /// Strip leading and trailing non-alphanumeric characters from each word.
    pub strip_punctuation: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { lowercase: true, strip_punctuation: true }
    }
}

impl Normalizer {
    pub const OFF: Normalizer = Normalizer { lowercase: false, strip_punctuation: false };

    pub fn words(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter_map(|raw| {
                let w = if self.strip_punctuation { raw.trim_matches(|c: char| !c.is_alphanumeric()) } else { raw };
                if w.is_empty() {
                    None
                } else if self.lowercase {
                    Some(w.to_lowercase())
                } else {
                    Some(w.to_owned())
                }
            })
            .collect()
    }
}

/// Splits `text` into normalized words with the default normalizer.
pub fn normalize_text(text: &str) -> Vec<String> {
    Normalizer::default().words(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Match,
    Substitution,
    Deletion,
    Insertion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignmentOp {
    pub kind: OpKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
}

impl AlignmentOp {
    pub fn matched(r: usize, h: usize) -> Self {
        Self { kind: OpKind::Match, ref_index: Some(r), hyp_index: Some(h) }
    }

    pub fn substitution(r: usize, h: usize) -> Self {
        Self { kind: OpKind::Substitution, ref_index: Some(r), hyp_index: Some(h) }
    }

    pub fn deletion(r: usize) -> Self {
        Self { kind: OpKind::Deletion, ref_index: Some(r), hyp_index: None }
    }

    pub fn insertion(h: usize) -> Self {
        Self { kind: OpKind::Insertion, ref_index: None, hyp_index: Some(h) }
    }

    pub fn cost(&self) -> usize {
        usize::from(self.kind != OpKind::Match)
    }
}

/// Minimal unit-cost alignment of `reference` against `hypothesis`.
///
/// Backtrace ties prefer match/substitution, then deletion, then insertion.
pub fn align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Vec<AlignmentOp> {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut dist = vec![0usize; (n + 1) * width];
    for (j, d) in dist[..width].iter_mut().enumerate() {
        *d = j;
    }
    for i in 1..=n {
        dist[i * width] = i;
        for j in 1..=m {
            let sub = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            dist[i * width + j] = (dist[(i - 1) * width + j - 1] + sub)
                .min(dist[(i - 1) * width + j] + 1)
                .min(dist[i * width + j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if here == dist[(i - 1) * width + j - 1] + usize::from(!same) {
                ops.push(if same {
                    AlignmentOp::matched(i - 1, j - 1)
                } else {
                    AlignmentOp::substitution(i - 1, j - 1)
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dist[(i - 1) * width + j] + 1 {
            ops.push(AlignmentOp::deletion(i - 1));
            i -= 1;
        } else {
            ops.push(AlignmentOp::insertion(j - 1));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Converts an alignment into per-hypothesis-word faulty labels.
///
/// Substituted and inserted words are faulty. Under [`DeletionMode::Attach`]
/// a deletion marks the next hypothesis word in alignment order, or the last
/// hypothesis word when nothing follows.
pub fn label_errors(
    utt_id: impl Into<String>,
    alignment: &[AlignmentOp],
    hyp_len: usize,
    mode: DeletionMode,
) -> ErrorLabels {
    let mut labels = vec![false; hyp_len];
    let (mut subs, mut dels, mut ins, mut n_ref) = (0, 0, 0, 0);
    for (pos, op) in alignment.iter().enumerate() {
        if op.ref_index.is_some() {
            n_ref += 1;
        }
        match op.kind {
            OpKind::Match => {}
            OpKind::Substitution => {
                subs += 1;
                labels[op.hyp_index.expect("substitution carries hyp index")] = true;
            }
            OpKind::Insertion => {
                ins += 1;
                labels[op.hyp_index.expect("insertion carries hyp index")] = true;
            }
            OpKind::Deletion => {
                dels += 1;
                if mode == DeletionMode::Attach && hyp_len > 0 {
                    let target = alignment[pos + 1..].iter().find_map(|o| o.hyp_index).unwrap_or(hyp_len - 1);
                    labels[target] = true;
                }
            }
        }
    }
    ErrorLabels {
        utt_id: utt_id.into(),
        labels,
        substitutions: subs,
        deletions: dels,
        insertions: ins,
        n_ref,
        deletion_mode: mode,
    }
}

/// Normalizes both texts, aligns, and labels in one step.
pub fn label_pair(
    utt_id: &str,
    reference: &str,
    hypothesis: &str,
    normalizer: &Normalizer,
    mode: DeletionMode,
) -> (Vec<String>, ErrorLabels) {
    let ref_words = normalizer.words(reference);
    let hyp_words = normalizer.words(hypothesis);
    let ops = align(&ref_words, &hyp_words);
    let labels = label_errors(utt_id, &ops, hyp_words.len(), mode);
    (hyp_words, labels)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn normalizes_case_and_edge_punctuation() {
        assert_eq!(normalize_text("Hello,  world!"), ["hello", "world"]);
        assert!(normalize_text("").is_empty());
        assert_eq!(normalize_text("C'est là"), ["c'est", "là"]);
        assert_eq!(normalize_text(" -- ... "), Vec::<String>::new());
        assert_eq!(Normalizer::OFF.words("Hello, world!"), ["Hello,", "world!"]);
    }

    #[test]
    fn single_substitution() {
        let ops = align(&w("a b c"), &w("a x c"));
        assert_eq!(ops, [AlignmentOp::matched(0, 0), AlignmentOp::substitution(1, 1), AlignmentOp::matched(2, 2)]);
        let l = label_errors("u", &ops, 3, DeletionMode::Attach);
        assert_eq!(l.labels, [false, true, false]);
        assert_eq!((l.substitutions, l.deletions, l.insertions, l.n_ref), (1, 0, 0, 3));
    }

    #[test]
    fn trailing_deletion() {
        let ops = align(&w("a b"), &w("a"));
        assert_eq!(ops, [AlignmentOp::matched(0, 0), AlignmentOp::deletion(1)]);
        let l = label_errors("u", &ops, 1, DeletionMode::Attach);
        assert_eq!(l.labels, [true]);
        assert_eq!(label_errors("u", &ops, 1, DeletionMode::Ignore).labels, [false]);
    }

    #[test]
    fn deletion_attaches_to_following_word() {
        let ops = align(&w("a b c"), &w("a c"));
        let l = label_errors("u", &ops, 2, DeletionMode::Attach);
        assert_eq!(l.labels, [false, true]);
        assert_eq!(l.deletions, 1);
        assert_eq!(l.wer(), Some(1.0 / 3.0));
    }

    #[test]
    fn identical_sequences_have_no_errors() {
        let words = w("the cat sat");
        let l = label_errors("u", &align(&words, &words), 3, DeletionMode::Attach);
        assert_eq!(l.faulty_count(), 0);
        assert_eq!(l.wer(), Some(0.0));
    }

    #[test]
    fn empty_hypothesis_labels_nothing() {
        let ops = align(&w("a b"), &w(""));
        let l = label_errors("u", &ops, 0, DeletionMode::Attach);
        assert!(l.labels.is_empty());
        assert_eq!(l.deletions, 2);
        assert_eq!(l.wer(), Some(1.0));
    }

    #[test]
    fn empty_reference() {
        let ops = align(&w(""), &w("x y"));
        let l = label_errors("u", &ops, 2, DeletionMode::Attach);
        assert_eq!(l.labels, [true, true]);
        assert_eq!(l.wer(), None);
    }

    fn word_seq() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..9)
            .prop_map(|v| v.into_iter().map(str::to_owned).collect())
    }

    proptest! {
        #[test]
        fn ops_reconstruct_both_sequences(r in word_seq(), h in word_seq()) {
            let ops = align(&r, &h);
            let refs: Vec<usize> = ops.iter().filter_map(|o| o.ref_index).collect();
            let hyps: Vec<usize> = ops.iter().filter_map(|o| o.hyp_index).collect();
            prop_assert_eq!(refs, (0..r.len()).collect::<Vec<_>>());
            prop_assert_eq!(hyps, (0..h.len()).collect::<Vec<_>>());
            for op in &ops {
                match op.kind {
                    OpKind::Match => prop_assert_eq!(&r[op.ref_index.unwrap()], &h[op.hyp_index.unwrap()]),
                    OpKind::Substitution => prop_assert_ne!(&r[op.ref_index.unwrap()], &h[op.hyp_index.unwrap()]),
                    _ => {}
                }
            }
        }

        #[test]
        fn labels_cover_hypothesis(r in word_seq(), h in word_seq()) {
            let ops = align(&r, &h);
            let l = label_errors("u", &ops, h.len(), DeletionMode::Attach);
            prop_assert_eq!(l.labels.len(), h.len());
            prop_assert!(l.faulty_count() >= l.substitutions + l.insertions);
            prop_assert_eq!(l.n_ref, r.len());
        }
    }
}
