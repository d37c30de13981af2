//! Domain types shared across the pipeline.
//!
//! Tensors are held in `f32` as exported; every reduction downstream
//! accumulates in `f64`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on attention row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// A hypothesis transcript with its optional reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub utt_id: String,
    #[serde(rename = "hyp")]
    pub hyp_text: String,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub ref_text: Option<String>,
}

impl Utterance {
    pub fn new(utt_id: impl Into<String>, hyp: impl Into<String>, reference: Option<&str>) -> Self {
        Self { utt_id: utt_id.into(), hyp_text: hyp.into(), ref_text: reference.map(str::to_owned) }
    }
}

/// Raw tensors exported from the quality-estimation encoder for one utterance.
///
/// `attention` is `[layers][heads][tokens][tokens]`, row-stochastic over the
/// last axis. `value_norms` is `[layers][heads][tokens]`. `gradients`, when
/// present, matches `attention` in shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub utt_id: String,
    pub tokens: Vec<String>,
    pub special_mask: Vec<bool>,
    pub word_spans: Vec<Range<usize>>,
    pub attention: Array4<f32>,
    pub value_norms: Array3<f32>,
    pub gradients: Option<Array4<f32>>,
}

impl AttentionRecord {
    /// Builds a record and checks every structural invariant.
    pub fn new(
        utt_id: impl Into<String>,
        tokens: Vec<String>,
        special_mask: Vec<bool>,
        word_spans: Vec<Range<usize>>,
        attention: Array4<f32>,
        value_norms: Array3<f32>,
        gradients: Option<Array4<f32>>,
    ) -> Result<Self> {
        let rec = Self { utt_id: utt_id.into(), tokens, special_mask, word_spans, attention, value_norms, gradients };
        rec.validate()?;
        Ok(rec)
    }

    pub fn num_layers(&self) -> usize {
        self.attention.shape()[0]
    }

    pub fn num_heads(&self) -> usize {
        self.attention.shape()[1]
    }

    pub fn num_tokens(&self) -> usize {
        self.attention.shape()[2]
    }

    pub fn num_words(&self) -> usize {
        self.word_spans.len()
    }

    pub fn validate(&self) -> Result<()> {
        let shape_err = |field, message: String| Error::Shape { utt_id: self.utt_id.clone(), field, message };
        let (l, h, t, t2) = self.attention.dim();
        if l == 0 || h == 0 {
            return Err(shape_err("attention", "needs at least one layer and one head".into()));
        }
        if t != t2 {
            return Err(shape_err("attention", format!("query axis {t} != key axis {t2}")));
        }
        if self.tokens.len() != t {
            return Err(shape_err("tokens", format!("{} tokens for T={t}", self.tokens.len())));
        }
        if self.special_mask.len() != t {
            return Err(shape_err("special_mask", format!("{} entries for T={t}", self.special_mask.len())));
        }
        if self.value_norms.dim() != (l, h, t) {
            return Err(shape_err(
                "value_norms",
                format!("shape {:?}, expected [{l}, {h}, {t}]", self.value_norms.shape()),
            ));
        }
        if let Some(g) = &self.gradients {
            if g.dim() != self.attention.dim() {
                return Err(shape_err(
                    "gradients",
                    format!("shape {:?} differs from attention {:?}", g.shape(), self.attention.shape()),
                ));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(shape_err("gradients", "non-finite entry".into()));
            }
        }
        if self.value_norms.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(shape_err("value_norms", "entries must be finite and non-negative".into()));
        }

        for (li, layer) in self.attention.axis_iter(Axis(0)).enumerate() {
            for (hi, head) in layer.axis_iter(Axis(0)).enumerate() {
                for (row, weights) in head.axis_iter(Axis(0)).enumerate() {
                    let sum: f64 = weights.iter().map(|&x| x as f64).sum();
                    let bad_entry = weights.iter().any(|&x| !x.is_finite() || x < 0.0);
                    if bad_entry || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::RowSum { utt_id: self.utt_id.clone(), layer: li, head: hi, row, sum });
                    }
                }
            }
        }

        self.validate_spans()
    }

    fn validate_spans(&self) -> Result<()> {
        let t = self.num_tokens();
        let span_err = |message: String| Error::Span { utt_id: self.utt_id.clone(), message };
        let mut prev_end = 0;
        for (w, span) in self.word_spans.iter().enumerate() {
            if span.start >= span.end {
                return Err(span_err(format!("word {w} has empty span [{}, {})", span.start, span.end)));
            }
            if span.end > t {
                return Err(span_err(format!("word {w} span [{}, {}) exceeds T={t}", span.start, span.end)));
            }
            if span.start < prev_end {
                return Err(span_err(format!("word {w} overlaps or precedes the previous span")));
            }
            if let Some(tok) = span.clone().find(|&i| self.special_mask[i]) {
                return Err(span_err(format!("word {w} covers special token {tok}")));
            }
            prev_end = span.end;
        }
        Ok(())
    }
}

/// How attention probabilities are weighted before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Scaling {
    Raw,
    #[default]
    ValueNorm,
    ValueNormTimesGrad,
}

/// Which axis of the averaged attention matrix defines a token's importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Direction {
    /// Row mean: attention a token pays to the others.
    #[default]
    Given,
    /// Column mean: attention a token gets from the others.
    Received,
}

/// Reduction from subword-token scores to one word score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Pooling {
    #[default]
    Max,
    Avg,
    /// 0.75-quantile, linear interpolation between closest ranks.
    Q3,
}

macro_rules! tagged_enum {
    ($ty:ty, $what:literal, $( $variant:path => $tag:literal ),+ $(,)?) => {
        impl $ty {
            pub fn tag(self) -> &'static str {
                match self { $( $variant => $tag ),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $( $tag => Ok($variant), )+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", $what, " {:?}, expected one of: {}"),
                        other,
                        [$( $tag ),+].join(", ")
                    ))),
                }
            }
        }

        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.tag())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

tagged_enum!(Scaling, "scaling",
    Scaling::Raw => "raw",
    Scaling::ValueNorm => "vnorm",
    Scaling::ValueNormTimesGrad => "vnorm-grad",
);
tagged_enum!(Direction, "direction",
    Direction::Given => "given",
    Direction::Received => "received",
);
tagged_enum!(Pooling, "pooling",
    Pooling::Max => "max",
    Pooling::Avg => "avg",
    Pooling::Q3 => "q3",
);
tagged_enum!(DeletionMode, "deletion mode",
    DeletionMode::Attach => "attach",
    DeletionMode::Ignore => "ignore",
);

impl Scaling {
    pub const ALL: [Scaling; 3] = [Scaling::Raw, Scaling::ValueNorm, Scaling::ValueNormTimesGrad];

    pub fn needs_gradients(self) -> bool {
        self == Scaling::ValueNormTimesGrad
    }
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Given, Direction::Received];
}

impl Pooling {
    pub const ALL: [Pooling; 3] = [Pooling::Max, Pooling::Avg, Pooling::Q3];
}

/// One cell of the (scaling x direction x pooling) method grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AggregationConfig {
    pub scaling: Scaling,
    pub direction: Direction,
    pub pooling: Pooling,
}

impl AggregationConfig {
    pub fn new(scaling: Scaling, direction: Direction, pooling: Pooling) -> Self {
        Self { scaling, direction, pooling }
    }

    /// Every configuration, in grid order; gradient scaling only when requested.
    pub fn grid(with_gradients: bool) -> Vec<AggregationConfig> {
        let mut out = Vec::new();
        for scaling in Scaling::ALL {
            if scaling.needs_gradients() && !with_gradients {
                continue;
            }
            for direction in Direction::ALL {
                for pooling in Pooling::ALL {
                    out.push(AggregationConfig::new(scaling, direction, pooling));
                }
            }
        }
        out
    }

    /// Method tag such as `vnorm/given/max`.
    pub fn tag(&self) -> String {
        format!("{}/{}/{}", self.scaling, self.direction, self.pooling)
    }
}

impl fmt::Display for AggregationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for AggregationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [sc, dir, pool] => Ok(Self::new(sc.parse()?, dir.parse()?, pool.parse()?)),
            _ => Err(Error::invalid(format!("method tag {s:?} is not scaling/direction/pooling"))),
        }
    }
}

/// Per-word error scores; higher means more likely erroneous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScores {
    pub utt_id: String,
    pub method: String,
    pub scores: Vec<f64>,
}

impl WordScores {
    pub fn new(utt_id: impl Into<String>, method: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        let utt_id = utt_id.into();
        if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(utt_id, bad));
        }
        Ok(Self { utt_id, method: method.into(), scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Where a deletion's faulty label lands on the hypothesis side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DeletionMode {
    /// Next hypothesis word in alignment order, or the last word when the
    /// deletion is at the end.
    #[default]
    Attach,
    /// Deletions are counted but label nothing.
    Ignore,
}

/// Binary faulty-word labels for a hypothesis plus WER components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorLabels {
    pub utt_id: String,
    pub labels: Vec<bool>,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub n_ref: usize,
    pub deletion_mode: DeletionMode,
}

impl ErrorLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn faulty_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `None` when the reference is empty.
    pub fn wer(&self) -> Option<f64> {
        (self.n_ref > 0).then(|| self.edits() as f64 / self.n_ref as f64)
    }

    /// All faulty or all correct (or no words at all).
    pub fn is_degenerate(&self) -> bool {
        let faulty = self.faulty_count();
        faulty == 0 || faulty == self.labels.len()
    }
}

/// Metric bundle for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub utt_id: String,
    pub k_used: usize,
    pub recall_k: f64,
    pub precision_k: f64,
    pub f1_k: f64,
    pub accuracy_k: f64,
    pub balanced_accuracy_k: f64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
}
