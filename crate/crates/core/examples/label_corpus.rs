//! Label hypothesis words against references and show a few alignments.
//!
//! cargo run --example label_corpus

use attnqe::alignment::{align, label_errors, Normalizer, OpKind};
use attnqe::commands::{label_records, LabelOptions};
use attnqe::synthetic::{error_injected_corpus, CorpusOptions};
use attnqe::DeletionMode;

fn main() -> attnqe::Result<()> {
    let corpus = error_injected_corpus(&CorpusOptions { utterances: 50, ..Default::default() }, 1);

    for mode in [DeletionMode::Attach, DeletionMode::Ignore] {
        let records = label_records(&corpus, &LabelOptions { deletions: mode, ..Default::default() })?;
        let edits: usize = records.iter().map(|r| r.labels.edits()).sum();
        let n_ref: usize = records.iter().map(|r| r.labels.n_ref).sum();
        let faulty: usize = records.iter().map(|r| r.labels.faulty_count()).sum();
        println!("deletions={mode:<6} WER {:.3}  faulty words {faulty}", edits as f64 / n_ref as f64);
    }

    let norm = Normalizer::default();
    for u in corpus.iter().filter(|u| u.hyp_text != u.ref_text.clone().unwrap_or_default()).take(3) {
        let r = norm.words(u.ref_text.as_deref().unwrap());
        let h = norm.words(&u.hyp_text);
        let ops = align(&r, &h);
        println!("\n{}", u.utt_id);
        for op in &ops {
            let rw = op.ref_index.map_or("-", |i| r[i].as_str());
            let hw = op.hyp_index.map_or("-", |j| h[j].as_str());
            let mark = match op.kind {
                OpKind::Match => ' ',
                OpKind::Substitution => 'S',
                OpKind::Deletion => 'D',
                OpKind::Insertion => 'I',
            };
            println!("  {mark} {rw:<12} {hw}");
        }
        let labels = label_errors(&u.utt_id, &ops, h.len(), DeletionMode::Attach);
        let marked: Vec<String> =
            h.iter().zip(&labels.labels).map(|(w, &bad)| if bad { format!("[{w}]") } else { w.clone() }).collect();
        println!("  labeled: {}", marked.join(" "));
    }
    Ok(())
}
