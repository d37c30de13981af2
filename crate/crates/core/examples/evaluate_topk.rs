//! Sweep k from 1 to 5 (plus the dynamic rule) and print the macro metrics
//! as a JSON table.
//!
//! cargo run --example evaluate_topk

use attnqe::aggregation::score_utterance;
use attnqe::metrics::evaluate_corpus;
use attnqe::synthetic::{error_injected_corpus, label_corpus, planted_export, CorpusOptions, PlantOptions};
use attnqe::{AggregationConfig, DeletionMode, Direction, KPolicy, Pooling, Scaling};
use serde_json::json;

fn main() -> attnqe::Result<()> {
    let corpus = error_injected_corpus(&CorpusOptions { utterances: 200, ..Default::default() }, 5);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions::default(), 6);
    let labels: Vec<_> = labeled.into_iter().map(|(_, l)| l).collect();

    let cfg = AggregationConfig::new(Scaling::ValueNorm, Direction::Received, Pooling::Max);
    let scores = records.iter().map(|r| score_utterance(r, &cfg)).collect::<attnqe::Result<Vec<_>>>()?;

    let policies = (1..=5).map(KPolicy::Fixed).chain([KPolicy::Dynamic]);
    let mut table = Vec::new();
    for k in policies {
        let report = evaluate_corpus(&scores, &labels, k)?.remove(0);
        let m = report.macro_avg.expect("non-empty corpus");
        table.push(json!({
            "k": k.to_string(),
            "f1_k": m.f1_k,
            "precision_k": m.precision_k,
            "recall_k": m.recall_k,
            "balanced_accuracy_k": m.balanced_accuracy_k,
        }));
    }
    println!("{}", serde_json::to_string_pretty(&json!({ "method": cfg.tag(), "sweep": table })).unwrap());
    Ok(())
}
