//! Attention tensors to word-level error scores.
//!
//! The pipeline is: scale each (layer, head) slice, average over layers and
//! heads, reduce the token x token matrix to one importance per token, then
//! pool token importances over each word's span.
//!
//! Conventions:
//! - value-norm scaling happens per head, before the layer/head mean, since
//!   the norms are per head;
//! - the diagonal is left out of token importance;
//! - gradient scaling uses the absolute value of the product;
//! - Q3 is the 0.75 quantile with linear interpolation.

use std::ops::Range;

use ndarray::{Array2, Array4, Zip};

use crate::error::{Error, Result};
use crate::model::{AggregationConfig, AttentionRecord, Direction, Pooling, Scaling, WordScores};

/// Applies the scaling mode element-wise, widening to `f64`.
pub fn scale_attention(record: &AttentionRecord, scaling: Scaling) -> Result<Array4<f64>> {
    let attn = &record.attention;
    let (l, h, t, _) = attn.dim();
    let mut out = Array4::<f64>::zeros((l, h, t, t));
    match scaling {
        Scaling::Raw => {
            Zip::from(&mut out).and(attn).for_each(|o, &a| *o = a as f64);
        }
        Scaling::ValueNorm => {
            Zip::indexed(&mut out).and(attn).for_each(|(li, hi, _, j), o, &a| {
                *o = a as f64 * record.value_norms[[li, hi, j]] as f64;
            });
        }
        Scaling::ValueNormTimesGrad => {
            let grads = record.gradients.as_ref().ok_or_else(|| Error::MissingGradients(record.utt_id.clone()))?;
            Zip::indexed(&mut out).and(attn).and(grads).for_each(|(li, hi, _, j), o, &a, &g| {
                *o = (a as f64 * record.value_norms[[li, hi, j]] as f64 * g as f64).abs();
            });
        }
    }
    Ok(out)
}

/// Arithmetic mean over the layer and head axes.
pub fn average_layers_heads(scaled: &Array4<f64>) -> Array2<f64> {
    let (l, h, t, _) = scaled.dim();
    let mut acc = Array2::<f64>::zeros((t, t));
    // fixed summation order: layer-major, then head
    for li in 0..l {
        for hi in 0..h {
            for i in 0..t {
                for j in 0..t {
                    acc[[i, j]] += scaled[[li, hi, i, j]];
                }
            }
        }
    }
    let count = (l * h) as f64;
    acc.mapv_inplace(|x| x / count);
    acc
}

/// Per-token importance from the averaged matrix.
///
/// Special tokens get `f64::NEG_INFINITY`. A non-special token with no other
/// non-special token to average over gets 0.
pub fn token_importance(matrix: &Array2<f64>, special_mask: &[bool], direction: Direction) -> Result<Vec<f64>> {
    let t = matrix.nrows();
    assert_eq!(special_mask.len(), t, "special mask length must equal T");
    if special_mask.iter().all(|&s| s) {
        return Err(Error::invalid("every token is special"));
    }
    let scores = (0..t)
        .map(|i| {
            if special_mask[i] {
                return f64::NEG_INFINITY;
            }
            let mut sum = 0.0;
            let mut n = 0usize;
            for o in (0..t).filter(|&o| o != i && !special_mask[o]) {
                sum += match direction {
                    Direction::Given => matrix[[i, o]],
                    Direction::Received => matrix[[o, i]],
                };
                n += 1;
            }
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect();
    Ok(scores)
}

/// Linear-interpolation quantile of an unsorted, non-empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pools token scores into one score per word span.
pub fn pool_to_words(token_scores: &[f64], word_spans: &[Range<usize>], pooling: Pooling) -> Result<Vec<f64>> {
    word_spans
        .iter()
        .enumerate()
        .map(|(w, span)| {
            let vals = token_scores
                .get(span.clone())
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::invalid(format!("word {w} has an empty or out-of-range span {span:?}")))?;
            Ok(match pooling {
                Pooling::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Pooling::Avg => vals.iter().sum::<f64>() / vals.len() as f64,
                Pooling::Q3 => quantile(vals, 0.75),
            })
        })
        .collect()
}

/// Full pipeline for one record.
pub fn score_utterance(record: &AttentionRecord, config: &AggregationConfig) -> Result<WordScores> {
    let scaled = scale_attention(record, config.scaling)?;
    let averaged = average_layers_heads(&scaled);
    let tokens = token_importance(&averaged, &record.special_mask, config.direction).map_err(|e| match e {
        Error::Invalid(_) => Error::AllSpecial(record.utt_id.clone()),
        other => other,
    })?;
    let words = pool_to_words(&tokens, &record.word_spans, config.pooling)
        .map_err(|e| Error::Span { utt_id: record.utt_id.clone(), message: e.to_string() })?;
    WordScores::new(record.utt_id.clone(), config.tag(), words)
}
