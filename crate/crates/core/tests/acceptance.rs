//! One line per acceptance criterion. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use attnqe::aggregation::score_utterance;
use attnqe::alignment::{align, label_errors, OpKind};
use attnqe::commands::{ablate, evaluate};
use attnqe::corpus::{kendall_tau_b, pearson, spearman};
use attnqe::ingest::read_attention_export;
use attnqe::metrics::{auc, average_precision, evaluate_instance, random_baseline, select_k, utterance_seed};
use attnqe::synthetic::{
    error_injected_corpus, label_corpus, median, mixed_sentence_lengths, planted_export, random_labels, CorpusOptions,
    PlantOptions,
};
use attnqe::{AggregationConfig, DeletionMode, Direction, ErrorLabels, KPolicy, Pooling, Scaling, WordScores};
use common::{fixture, metric_instances, read_json};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- alignment

fn oracle_distance(a: &[u8], b: &[u8]) -> usize {
    // single-row formulation, hypothesis-major
    let mut row: Vec<usize> = (0..=a.len()).collect();
    for (j, &y) in b.iter().enumerate() {
        let mut diag = row[0];
        row[0] = j + 1;
        for (i, &x) in a.iter().enumerate() {
            let up = row[i + 1];
            row[i + 1] = (diag + usize::from(x != y)).min(up + 1).min(row[i] + 1);
            diag = up;
        }
    }
    row[a.len()]
}

fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..alphabet).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn alignment_oracle() -> Outcome {
    let start = Instant::now();
    let seqs = all_sequences(6, 3);
    let words: Vec<Vec<&str>> = seqs.iter().map(|s| s.iter().map(|&c| ["a", "b", "c"][c as usize]).collect()).collect();
    let pairs = seqs.len() * seqs.len();
    words.par_iter().enumerate().try_for_each(|(ri, r)| {
        for (hi, h) in words.iter().enumerate() {
            let ops = align(r, h);
            let cost: usize = ops.iter().map(|o| o.cost()).sum();
            let want = oracle_distance(&seqs[ri], &seqs[hi]);
            ensure(cost == want, || format!("{r:?} vs {h:?}: cost {cost}, oracle {want}"))?;
            let refs: Vec<usize> = ops.iter().filter_map(|o| o.ref_index).collect();
            let hyps: Vec<usize> = ops.iter().filter_map(|o| o.hyp_index).collect();
            ensure(refs == (0..r.len()).collect::<Vec<_>>() && hyps == (0..h.len()).collect::<Vec<_>>(), || {
                format!("{r:?} vs {h:?}: ops do not cover both sequences in order")
            })?;
            ensure(
                ops.iter().all(|o| o.kind != OpKind::Match || r[o.ref_index.unwrap()] == h[o.hyp_index.unwrap()]),
                || format!("{r:?} vs {h:?}: match on unequal words"),
            )?;
            let labels = label_errors("x", &ops, h.len(), DeletionMode::Attach);
            let sdi = labels.substitutions + labels.deletions + labels.insertions;
            ensure(sdi == want, || format!("{r:?} vs {h:?}: S+D+I {sdi}, oracle {want}"))?;
        }
        Ok::<_, String>(())
    })?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("{pairs} pairs, {elapsed:.1?}"))
}

// ---------------------------------------------------------------- metrics

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
        let hits = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l).count() as f64;
        let recall = hits / positives;
        ap += (recall - prev_recall) * (hits / predicted);
        prev_recall = recall;
    }
    ap
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // half the vectors come from a coarse grid so ties are common
    if rng.gen_bool(0.5) {
        (0..n).map(|_| f64::from(rng.gen_range(0..4u8)) / 4.0).collect()
    } else {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for n in 1..=8usize {
        for pattern in 0u32..(1 << n) {
            let labels: Vec<bool> = (0..n).map(|i| pattern >> i & 1 == 1).collect();
            let one_class = labels.iter().all(|&l| l) || labels.iter().all(|&l| !l);
            for _ in 0..200 {
                let scores = random_scores(&mut rng, n);
                let (a, p) = (auc(&scores, &labels), average_precision(&scores, &labels));
                if one_class {
                    let m = evaluate_instance("x", &scores, &labels, KPolicy::Dynamic).map_err(|e| e.to_string())?;
                    ensure(a.is_none() && m.auc.is_none() && m.ap.is_none(), || {
                        format!("{labels:?}: one-class instance not skipped")
                    })?;
                    // AP alone stays defined when every word is faulty
                    let want = labels[0].then(|| brute_ap(&scores, &labels));
                    ensure(close(p, want), || format!("{labels:?}: AP {p:?} vs {want:?}"))?;
                    continue;
                }
                let (a, p) = (a.unwrap(), p.unwrap());
                let (ba, bp) = (brute_auc(&scores, &labels), brute_ap(&scores, &labels));
                worst = worst.max((a - ba).abs()).max((p - bp).abs());
                ensure((a - ba).abs() <= 1e-9, || format!("{scores:?} {labels:?}: AUC {a} vs {ba}"))?;
                ensure((p - bp).abs() <= 1e-9, || format!("{scores:?} {labels:?}: AP {p} vs {bp}"))?;
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!("{checked} instances, max |diff| {worst:.1e}, {elapsed:.1?}"))
}

// ---------------------------------------------------------------- identity

fn identity_check() -> Outcome {
    let mut corpora: Vec<(&str, Vec<WordScores>, Vec<ErrorLabels>)> = Vec::new();
    let (s, l) = metric_instances("metrics_small.jsonl", "fixture");
    corpora.push(("metrics fixture", s, l));

    let labels = random_labels(2000, 10, 0.2, 1);
    let scores = labels.iter().map(|l| random_baseline(&l.utt_id, 10, utterance_seed(0, &l.utt_id))).collect();
    corpora.push(("random", scores, labels));

    let corpus = error_injected_corpus(&CorpusOptions { utterances: 200, ..Default::default() }, 3);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions::default(), 4);
    let labels: Vec<ErrorLabels> = labeled.into_iter().map(|(_, l)| l).collect();
    for cfg in AggregationConfig::grid(true) {
        let scores = records.iter().map(|r| score_utterance(r, &cfg).unwrap()).collect();
        corpora.push(("planted", scores, labels.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut instances = 0usize;
    for (name, scores, labels) in &corpora {
        for policy in [KPolicy::Dynamic, KPolicy::Fixed(1), KPolicy::Fixed(2), KPolicy::Fixed(rng.gen_range(3..6))] {
            for report in evaluate(scores, labels, policy).map_err(|e| format!("{name}: {e}"))? {
                for m in &report.per_instance {
                    ensure(m.recall_k == m.accuracy_k, || {
                        format!("{name}/{}: recall {} != accuracy {}", m.utt_id, m.recall_k, m.accuracy_k)
                    })?;
                    instances += 1;
                }
            }
        }
    }
    // direct check on odd shapes, including k = n
    for n in 1..=12usize {
        let scores = random_scores(&mut rng, n);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        for k in 1..=n {
            let m = evaluate_instance("x", &scores, &labels, KPolicy::Fixed(k)).map_err(|e| e.to_string())?;
            ensure(m.recall_k == m.accuracy_k, || format!("n={n} k={k}"))?;
            instances += 1;
        }
    }
    Ok(format!("{instances} instance evaluations, all exactly equal"))
}

// ---------------------------------------------------------------- random calibration

fn random_calibration() -> Outcome {
    let start = Instant::now();
    let labels = random_labels(10_000, 10, 0.2, 2024);
    let scores: Vec<WordScores> =
        labels.iter().map(|l| random_baseline(&l.utt_id, 10, utterance_seed(0, &l.utt_id))).collect();
    let report = evaluate(&scores, &labels, KPolicy::Dynamic).map_err(|e| e.to_string())?.remove(0);
    let macro_auc = report.macro_avg.and_then(|m| m.auc).ok_or("no AUC")?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    ensure((macro_auc - 0.5).abs() <= 0.02, || format!("macro AUC {macro_auc:.4}"))?;
    Ok(format!(
        "macro AUC {macro_auc:.4} over {} instances ({} one-class skipped), {elapsed:.1?}",
        report.instances, report.skipped_degenerate
    ))
}

// ---------------------------------------------------------------- dynamic k

fn dynamic_k() -> Outcome {
    let lengths = mixed_sentence_lengths(5000, 11);
    let med = median(&lengths);
    ensure(med == 11.0, || format!("median length {med}"))?;
    let k = select_k(med as usize, KPolicy::Dynamic).map_err(|e| e.to_string())?;
    ensure(k == 2, || format!("dynamic k {k} at median"))?;
    for n in 11..=20 {
        let k = select_k(n, KPolicy::Dynamic).map_err(|e| e.to_string())?;
        ensure(k == 2, || format!("dynamic k {k} for {n} words"))?;
    }
    Ok(format!("median length {med}, k = {k}"))
}

// ---------------------------------------------------------------- aggregation

fn aggregation_oracle() -> Outcome {
    let expected = read_json("agg_small_expected.json");
    let plain = read_attention_export(&fixture("agg_small.jsonl")).map_err(|e| e.to_string())?;
    let grads = read_attention_export(&fixture("agg_small_grad.jsonl")).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut count = 0;
    for (records, with_grads) in [(&plain, false), (&grads, true)] {
        for cfg in AggregationConfig::grid(with_grads).into_iter().filter(|c| c.scaling.needs_gradients() == with_grads)
        {
            let got = score_utterance(&records[0], &cfg).map_err(|e| e.to_string())?;
            let want: Vec<f64> = serde_json::from_value(expected[cfg.tag()].clone()).map_err(|e| e.to_string())?;
            ensure(got.scores.len() == want.len(), || format!("{}: word count", cfg.tag()))?;
            for (g, w) in got.scores.iter().zip(&want) {
                worst = worst.max((g - w).abs());
                ensure((g - w).abs() <= 1e-6, || format!("{}: {g} vs {w}", cfg.tag()))?;
            }
            count += 1;
        }
    }
    Ok(format!("{count} configs (12 plain + 6 gradient), max |diff| {worst:.1e}"))
}

// ---------------------------------------------------------------- planted signal

fn planted_signal() -> Outcome {
    let corpus = error_injected_corpus(&CorpusOptions { utterances: 300, ..Default::default() }, 17);
    let labeled = label_corpus(&corpus, DeletionMode::Attach);
    let items: Vec<_> = labeled.iter().map(|(w, l)| (l.utt_id.clone(), w.clone(), l.labels.clone())).collect();
    let records = planted_export(&items, &PlantOptions { with_gradients: false, ..Default::default() }, 18);
    let labels: Vec<ErrorLabels> = labeled.into_iter().map(|(_, l)| l).collect();
    let rows = ablate(&records, &labels, KPolicy::Dynamic).map_err(|e| e.to_string())?;
    let f1 = |s: Scaling, d: Direction, p: Pooling| {
        let tag = AggregationConfig::new(s, d, p).tag();
        rows.iter().find(|r| r.method == tag).and_then(|r| r.f1_k).unwrap_or(f64::NAN)
    };
    let d = Direction::Received;
    let (vmax, rmax, vavg) = (
        f1(Scaling::ValueNorm, d, Pooling::Max),
        f1(Scaling::Raw, d, Pooling::Max),
        f1(Scaling::ValueNorm, d, Pooling::Avg),
    );
    let given =
        (f1(Scaling::ValueNorm, Direction::Given, Pooling::Max), f1(Scaling::Raw, Direction::Given, Pooling::Max));
    ensure(vmax > rmax, || format!("received: vnorm/max {vmax:.4} <= raw/max {rmax:.4}"))?;
    ensure(vmax >= vavg, || format!("received: vnorm/max {vmax:.4} < vnorm/avg {vavg:.4}"))?;
    Ok(format!(
        "received: vnorm/max {vmax:.4} > raw/max {rmax:.4}, max >= avg {vavg:.4}; given (info): vnorm/max {:.4}, raw/max {:.4}",
        given.0, given.1
    ))
}

// ---------------------------------------------------------------- correlations

fn brute_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (x.len() >= 2 && vx > 0.0 && vy > 0.0).then(|| cov / (vx.sqrt() * vy.sqrt()))
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            if dx == 0.0 && dy == 0.0 {
            } else if dx == 0.0 {
                tx += 1.0;
            } else if dy == 0.0 {
                ty += 1.0;
            } else if dx.signum() == dy.signum() {
                c += 1.0;
            } else {
                d += 1.0;
            }
        }
    }
    let denom = ((c + d + tx) * (c + d + ty)).sqrt();
    (denom > 0.0).then(|| (c - d) / denom)
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    }
}

fn correlation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut defined = 0;
    for t in 0..1000 {
        let n = rng.gen_range(2..=10);
        let coarse = t % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| if coarse { f64::from(rng.gen_range(0..4u8)) } else { rng.gen::<f64>() };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5u8).into()).collect();
        let (p, s, k) = (pearson(&x, &y), spearman(&x, &y), kendall_tau_b(&x, &y));
        let (bp, bs, bk) =
            (brute_pearson(&x, &y), brute_pearson(&brute_ranks(&x), &brute_ranks(&y)), brute_kendall(&x, &y));
        ensure(close(p, bp), || format!("pearson {x:?} {y:?}: {p:?} vs {bp:?}"))?;
        ensure(close(s, bs), || format!("spearman {x:?} {y:?}: {s:?} vs {bs:?}"))?;
        ensure(close(k, bk), || format!("kendall {x:?} {y:?}: {k:?} vs {bk:?}"))?;
        defined += usize::from(p.is_some());
    }
    let x = [0.1, 0.4, 0.5, 2.0, 3.5, 7.0];
    let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let perfect = (pearson(&y, &y), spearman(&x, &y), kendall_tau_b(&x, &y));
    ensure(perfect == (Some(1.0), Some(1.0), Some(1.0)), || format!("perfect monotone gave {perfect:?}"))?;
    Ok(format!("1000 tables ({defined} with defined correlations), perfect monotone (1, 1, 1)"))
}

// ---------------------------------------------------------------- determinism

fn cli_determinism() -> Outcome {
    let ws = common::synthetic_workspace(30, true, 31);
    let p = |name: &str| ws.path(name).to_str().unwrap().to_owned();
    let (corpus, attn, labels) = (ws.corpus.to_str().unwrap(), ws.attn.to_str().unwrap(), ws.labels.to_str().unwrap());
    let scores = p("scores.jsonl");
    std::fs::write(&scores, common::run(["score", "--attn", attn]).1).map_err(|e| e.to_string())?;
    let commands: Vec<Vec<String>> = vec![
        vec!["label", "--corpus", corpus],
        vec!["label", "--corpus", corpus, "--deletions", "ignore"],
        vec!["score", "--attn", attn],
        vec!["score", "--attn", attn, "--scaling", "vnorm-grad", "--direction", "received", "--pool", "q3"],
        vec!["baseline", "--corpus", corpus, "--kind", "random"],
        vec!["evaluate", "--scores", &scores, "--labels", labels, "--k", "dyn"],
        vec!["ablate", "--attn", attn, "--labels", labels],
        vec!["corpus", "--scores", &scores, "--labels", labels, "--target", "rate", "--min-occ", "1"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(str::to_owned).collect())
    .collect();
    for args in &commands {
        let first = common::run(args);
        let second = common::run(args);
        ensure(first.0 == 0, || format!("{}: exit {} ({})", args[0], first.0, first.2.trim()))?;
        ensure(!first.1.is_empty() && first.1 == second.1, || format!("{}: outputs differ", args.join(" ")))?;
    }
    Ok(format!("{} invocations, each byte-identical across two runs", commands.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("alignment oracle", alignment_oracle),
        ("metric oracles", metric_oracles),
        ("identity recall@k == accuracy@k", identity_check),
        ("random-baseline calibration", random_calibration),
        ("dynamic-k consistency", dynamic_k),
        ("aggregation oracle", aggregation_oracle),
        ("planted-signal ablation ordering", planted_signal),
        ("correlation oracle", correlation_oracle),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
