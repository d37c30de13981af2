//! Which word types draw attention, and do they match the error-prone ones?
//!
//! cargo run --example corpus_report

use std::collections::HashMap;

use attnqe::aggregation::score_utterance;
use attnqe::commands::{analyze_corpus, CorpusOptions};
use attnqe::corpus::Target;
use attnqe::synthetic::{error_injected_corpus, label_corpus, planted_export, CorpusOptions as Gen, PlantOptions};
use attnqe::{AggregationConfig, DeletionMode, Direction, Pooling, Scaling};

fn main() -> attnqe::Result<()> {
    let corpus = error_injected_corpus(&Gen { utterances: 400, ..Default::default() }, 9);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions::default(), 10);

    let cfg = AggregationConfig::new(Scaling::ValueNorm, Direction::Received, Pooling::Max);
    let scores = records.iter().map(|r| score_utterance(r, &cfg)).collect::<attnqe::Result<Vec<_>>>()?;
    let words: HashMap<String, Vec<String>> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone())).collect();
    let labels: Vec<_> = labeled.into_iter().map(|(_, l)| l).collect();

    let opts = CorpusOptions { target: Target::ErrorRate, min_occurrences: 5, top_n: 10, method: None };
    let found = analyze_corpus(&scores, &labels, &words, &opts)?;
    println!("{}: {} word types with at least 5 occurrences", found.method, found.word_table.len());
    println!("vs error count: {:?}", found.by_target.error_count);
    println!("vs error rate:  {:?}", found.by_target.error_rate);
    println!("\n{:<12} {:>5} {:>6} {:>6} {:>9}", "word", "occ", "errors", "rate", "attention");
    for row in found.error_prone_words {
        println!(
            "{:<12} {:>5} {:>6} {:>6.2} {:>9.4}",
            row.word, row.occurrence_count, row.error_count, row.error_rate, row.mean_attention
        );
    }
    Ok(())
}
