//! Seeded synthetic data: error-injected corpora and attention exports with
//! a controllable planted signal. Used by the examples and the acceptance
//! suite; nothing here touches a real model.

use ndarray::{Array3, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::{label_pair, Normalizer};
use crate::model::{AttentionRecord, DeletionMode, ErrorLabels, Utterance};

const VOCAB: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "is", "was", "that", "it", "for", "on", "with", "as", "he", "she", "they",
    "at", "by", "this", "from", "had", "not", "but", "what", "all", "were", "when", "we", "there", "can", "an", "your",
    "which", "their", "said", "time", "people", "water", "house", "river", "morning", "window", "garden", "letter",
    "question", "evening", "mountain", "village", "captain", "station",
];

/// Words that the simulated recognizer gets wrong much more often.
pub const HARD_WORDS: &[&str] =
    &["worcester", "anemone", "thoroughly", "colonel", "quay", "epitome", "rural", "squirrel", "niche", "isthmus"];

const CONFUSIONS: &[&str] = &["uh", "um", "there", "their", "an", "and", "in", "on", "of", "off"];

/// Options for [`error_injected_corpus`].
#[derive(Debug, Clone, Copy)]
pub struct CorpusOptions {
    pub utterances: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Per-word corruption probability for ordinary vocabulary.
    pub error_rate: f64,
    /// Per-word corruption probability for [`HARD_WORDS`].
    pub hard_error_rate: f64,
    /// Probability that a reference word is drawn from [`HARD_WORDS`].
    pub hard_fraction: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { utterances: 100, min_len: 6, max_len: 18, error_rate: 0.08, hard_error_rate: 0.6, hard_fraction: 0.12 }
    }
}

/// Reference sentences from a small vocabulary with substitutions,
/// deletions and insertions injected into the hypotheses.
pub fn error_injected_corpus(opts: &CorpusOptions, seed: u64) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..opts.utterances)
        .map(|n| {
            let len = rng.gen_range(opts.min_len..=opts.max_len);
            let reference: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen_bool(opts.hard_fraction) {
                        *HARD_WORDS.choose(&mut rng).unwrap()
                    } else {
                        *VOCAB.choose(&mut rng).unwrap()
                    }
                })
                .collect();
            let mut hyp: Vec<String> = Vec::with_capacity(len + 2);
            for &w in &reference {
                let p = if HARD_WORDS.contains(&w) { opts.hard_error_rate } else { opts.error_rate };
                if !rng.gen_bool(p) {
                    hyp.push(w.to_owned());
                    continue;
                }
                match rng.gen_range(0..10) {
                    // substitution keeps the word recognizably broken
                    0..=6 => hyp.push(format!("{}{}", &w[..w.len().div_ceil(2)], CONFUSIONS.choose(&mut rng).unwrap())),
                    7..=8 => {}
                    _ => {
                        hyp.push(w.to_owned());
                        hyp.push(CONFUSIONS.choose(&mut rng).unwrap().to_string());
                    }
                }
            }
            Utterance::new(format!("utt{n:04}"), hyp.join(" "), Some(&reference.join(" ")))
        })
        .collect()
}

/// Hypothesis words and labels for each utterance of a corpus with references.
pub fn label_corpus(corpus: &[Utterance], mode: DeletionMode) -> Vec<(Vec<String>, ErrorLabels)> {
    let norm = Normalizer::default();
    corpus
        .iter()
        .map(|u| label_pair(&u.utt_id, u.ref_text.as_deref().unwrap_or(""), &u.hyp_text, &norm, mode))
        .collect()
}

/// Shape and signal strength of a planted export.
#[derive(Debug, Clone, Copy)]
pub struct PlantOptions {
    pub layers: usize,
    pub heads: usize,
    /// Multiplier on the value norm of one token in every faulty word.
    pub norm_boost: f32,
    pub with_gradients: bool,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self { layers: 2, heads: 2, norm_boost: 1.5, with_gradients: true }
    }
}

/// Builds an attention export for the given hypothesis words.
///
/// Words are split into 1 to 3 subword tokens and framed with `<s>`/`</s>`.
/// Attention rows are random (no signal). Value norms are noise around 1,
/// except that one token of every faulty word has its norm multiplied by
/// `norm_boost` in every layer and head. Gradients, when requested, are
/// uniform noise in `[-1, 1]`.
pub fn planted_export(
    items: &[(String, Vec<String>, Vec<bool>)],
    opts: &PlantOptions,
    seed: u64,
) -> Vec<AttentionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items
        .iter()
        .map(|(utt_id, words, labels)| {
            let mut tokens = vec!["<s>".to_owned()];
            let mut spans = Vec::with_capacity(words.len());
            for w in words {
                let chars: Vec<char> = w.chars().collect();
                let pieces = chars.len().div_ceil(4).clamp(1, 3);
                let start = tokens.len();
                for (i, chunk) in chars.chunks(chars.len().div_ceil(pieces).max(1)).enumerate() {
                    let piece: String = chunk.iter().collect();
                    tokens.push(if i == 0 { format!("▁{piece}") } else { piece });
                }
                spans.push(start..tokens.len());
            }
            tokens.push("</s>".to_owned());
            let t = tokens.len();
            let mut special = vec![false; t];
            special[0] = true;
            special[t - 1] = true;

            let (l, h) = (opts.layers, opts.heads);
            let mut attention = Array4::<f32>::zeros((l, h, t, t));
            for mut row in attention.rows_mut() {
                row.mapv_inplace(|_| rng.gen_range(0.05f32..1.0));
                let s: f32 = row.sum();
                row.mapv_inplace(|x| x / s);
            }

            let mut value_norms = Array3::<f32>::zeros((l, h, t));
            value_norms.mapv_inplace(|_| rng.gen_range(0.8f32..1.2));
            for (span, &faulty) in spans.iter().zip(labels) {
                if faulty {
                    let tok = rng.gen_range(span.clone());
                    for li in 0..l {
                        for hi in 0..h {
                            value_norms[[li, hi, tok]] *= opts.norm_boost;
                        }
                    }
                }
            }

            let gradients = opts.with_gradients.then(|| {
                let mut g = Array4::<f32>::zeros((l, h, t, t));
                g.mapv_inplace(|_| rng.gen_range(-1.0f32..1.0));
                g
            });

            AttentionRecord::new(utt_id.clone(), tokens, special, spans, attention, value_norms, gradients)
                .expect("generator produces valid records")
        })
        .collect()
}

/// `count` instances of `words` labels each, every word faulty with
/// probability `error_rate`.
pub fn random_labels(count: usize, words: usize, error_rate: f64, seed: u64) -> Vec<ErrorLabels> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let labels: Vec<bool> = (0..words).map(|_| rng.gen_bool(error_rate)).collect();
            let subs = labels.iter().filter(|&&l| l).count();
            ErrorLabels {
                utt_id: format!("r{i:05}"),
                labels,
                substitutions: subs,
                deletions: 0,
                insertions: 0,
                n_ref: words,
                deletion_mode: DeletionMode::Attach,
            }
        })
        .collect()
}

/// Sentence lengths from a two-component mixture: read-speech-like
/// sentences (around 17 words) and short crowd-sourced prompts (around 10).
pub fn mixed_sentence_lengths(count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| if rng.gen_bool(0.2) { rng.gen_range(9..=25) } else { rng.gen_range(5..=15) }).collect()
}

pub fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}
