//! Read an attention export and score its words under every aggregation
//! config.
//!
//! cargo run --example score_attention [export.jsonl]

use std::path::PathBuf;

use attnqe::aggregation::{average_layers_heads, scale_attention, score_utterance, token_importance};
use attnqe::ingest::read_attention_export;
use attnqe::{AggregationConfig, Direction, Scaling};

fn main() -> attnqe::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/agg_small_grad.jsonl"));
    let records = read_attention_export(&path)?;
    let rec = &records[0];
    println!("{}: {} layers, {} heads, tokens {:?}", rec.utt_id, rec.num_layers(), rec.num_heads(), rec.tokens);

    let matrix = average_layers_heads(&scale_attention(rec, Scaling::ValueNorm)?);
    for dir in Direction::ALL {
        let t = token_importance(&matrix, &rec.special_mask, dir)?;
        println!("token importance ({dir}): {t:.4?}");
    }

    let with_grads = rec.gradients.is_some();
    for cfg in AggregationConfig::grid(with_grads) {
        let ws = score_utterance(rec, &cfg)?;
        println!("{:<22} {:.6?}", ws.method, ws.scores);
    }
    Ok(())
}
