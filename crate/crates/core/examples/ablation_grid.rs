//! Run the full aggregation grid on a synthetic export where faulty words
//! carry elevated value norms.
//!
//! cargo run --example ablation_grid

use attnqe::commands::ablate;
use attnqe::synthetic::{error_injected_corpus, label_corpus, planted_export, CorpusOptions, PlantOptions};
use attnqe::{DeletionMode, KPolicy};

fn main() -> attnqe::Result<()> {
    let corpus = error_injected_corpus(&CorpusOptions { utterances: 300, ..Default::default() }, 17);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions::default(), 18);
    let labels: Vec<_> = labeled.into_iter().map(|(_, l)| l).collect();

    println!("{:<24} {:>7} {:>7} {:>7}", "method", "F1@k", "AUC", "AP");
    for row in ablate(&records, &labels, KPolicy::Dynamic)? {
        let m = row.macro_avg.expect("evaluable corpus");
        println!(
            "{:<24} {:>7.4} {:>7.4} {:>7.4}",
            row.method,
            m.f1_k,
            m.auc.unwrap_or(f64::NAN),
            m.ap.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
