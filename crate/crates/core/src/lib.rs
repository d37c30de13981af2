//! Word-level error detection for speech recognition hypotheses from
//! attention exported by a text model.
//!
//! The pipeline: [`alignment`] labels hypothesis words against references,
//! [`aggregation`] turns attention exports into per-word scores,
//! [`metrics`] ranks and scores them, and [`corpus`] looks at which word
//! types attract attention and errors across a whole corpus.

// word spans are `Vec<Range<usize>>`, so one-span vectors are intended
#![allow(clippy::single_range_in_vec_init)]

pub mod aggregation;
pub mod alignment;
pub mod commands;
pub mod corpus;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod synthetic;

pub use error::{Error, Result};
pub use metrics::KPolicy;
pub use model::{
    AggregationConfig, AttentionRecord, DeletionMode, Direction, ErrorLabels, InstanceMetrics, Pooling, Scaling,
    Utterance, WordScores,
};
