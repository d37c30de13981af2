//! Attention scores against the random and confidence baselines.
//!
//! cargo run --example baselines

use attnqe::aggregation::score_utterance;
use attnqe::metrics::{confidence_baseline, evaluate_corpus, random_baseline, utterance_seed};
use attnqe::synthetic::{error_injected_corpus, label_corpus, planted_export, CorpusOptions, PlantOptions};
use attnqe::{AggregationConfig, DeletionMode, Direction, KPolicy, Pooling, Scaling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> attnqe::Result<()> {
    let corpus = error_injected_corpus(&CorpusOptions { utterances: 300, ..Default::default() }, 21);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions::default(), 22);

    let mut scores = Vec::new();
    let cfg = AggregationConfig::new(Scaling::ValueNorm, Direction::Received, Pooling::Max);
    for r in &records {
        scores.push(score_utterance(r, &cfg)?);
    }
    // a noisy recognizer confidence: lower on faulty words, on average
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (words, l) in &labeled {
        scores.push(random_baseline(&l.utt_id, words.len(), utterance_seed(0, &l.utt_id)));
        let conf: Vec<f64> = l
            .labels
            .iter()
            .map(|&bad| (if bad { 0.6 } else { 0.85 } + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0))
            .collect();
        scores.push(confidence_baseline(&l.utt_id, &conf, "simulated")?);
    }
    let labels: Vec<_> = labeled.into_iter().map(|(_, l)| l).collect();

    for report in evaluate_corpus(&scores, &labels, KPolicy::Fixed(2))? {
        let m = report.macro_avg.expect("evaluable corpus");
        println!(
            "{:<22} F1@2 {:.4}  AUC {:.4}  AP {:.4}",
            report.method,
            m.f1_k,
            m.auc.unwrap_or(f64::NAN),
            m.ap.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
